#include "dtwin/twin/refresh_stats.hpp"

namespace dtwin::twin {

using namespace std::chrono;

nlohmann::ordered_json to_json(const RefreshWindow& w, std::string_view stream) {
    nlohmann::ordered_json j;
    j["stream"] = stream;
    j["index"] = w.index;
    j["start_ms"] = w.start_ms;
    j["end_ms"] = w.end_ms;
    j["window_count"] = w.window_count;
    j["period_ms"] = w.period_ms;
    j["ewma_period_ms"] = w.ewma_period_ms;
    j["max_period_ms"] = w.max_period_ms;
    j["warm_up"] = w.warm_up;
    return j;
}

RefreshMeter::RefreshMeter(std::size_t history, double ewma_alpha, Clock::time_point origin)
    : history_(history), alpha_(ewma_alpha), origin_(origin) {
    const auto wall_now = duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    origin_wall_ms_ = wall_now - duration_cast<milliseconds>(Clock::now() - origin).count();
}

std::int64_t RefreshMeter::wall_ms(Clock::time_point t) const {
    return origin_wall_ms_ + duration_cast<milliseconds>(t - origin_).count();
}

void RefreshMeter::roll_locked(Clock::time_point t) {
    while (t >= origin_ + seconds(index_ + 1)) {
        if (count_ > 0) {
            RefreshWindow w;
            w.index = index_;
            w.start_ms = wall_ms(origin_ + seconds(index_));
            w.end_ms = wall_ms(origin_ + seconds(index_ + 1));
            w.window_count = count_;
            w.period_ms = 1000.0 / count_;
            ewma_ = ewma_ ? alpha_ * w.period_ms + (1 - alpha_) * *ewma_ : w.period_ms;
            w.ewma_period_ms = *ewma_;
            w.max_period_ms = max_gap_ms_ > 0 ? max_gap_ms_ : w.period_ms;
            w.warm_up = warm_pending_;
            warm_pending_ = false;
            closed_.push_back(w);
            while (closed_.size() > history_) closed_.pop_front();
        }
        ++index_;
        count_ = 0;
        max_gap_ms_ = 0;
    }
}

void RefreshMeter::connected(Clock::time_point t) {
    std::lock_guard lock(mu_);
    roll_locked(t);
    warm_pending_ = true;
    last_sample_.reset();
}

void RefreshMeter::record(Clock::time_point t) {
    std::lock_guard lock(mu_);
    roll_locked(t);
    ++count_;
    ++total_;
    if (last_sample_) {
        max_gap_ms_ = std::max(max_gap_ms_, duration<double, std::milli>(t - *last_sample_).count());
    }
    last_sample_ = t;
}

void RefreshMeter::roll(Clock::time_point t) {
    std::lock_guard lock(mu_);
    roll_locked(t);
}

std::vector<RefreshWindow> RefreshMeter::windows() const {
    std::lock_guard lock(mu_);
    return {closed_.begin(), closed_.end()};
}

std::optional<RefreshWindow> RefreshMeter::last() const {
    std::lock_guard lock(mu_);
    if (closed_.empty()) return std::nullopt;
    return closed_.back();
}

std::uint64_t RefreshMeter::total() const {
    std::lock_guard lock(mu_);
    return total_;
}

}  // namespace dtwin::twin
