#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

namespace dtwin::twin {

// One closed 1 s counting window of a polling stream.
struct RefreshWindow {
    std::uint64_t index = 0;      // windows since the meter started
    std::int64_t start_ms = 0;    // wall clock, epoch ms
    std::int64_t end_ms = 0;
    std::uint32_t window_count = 0;
    double period_ms = 0;         // 1000 / window_count
    double ewma_period_ms = 0;
    double max_period_ms = 0;     // largest gap between consecutive samples
    bool warm_up = false;         // first window after (re)connecting

    bool operator==(const RefreshWindow&) const = default;
};

nlohmann::ordered_json to_json(const RefreshWindow& w, std::string_view stream);

// Counts completed requests of one stream in fixed 1 s windows. Safe to
// record from one thread while others read.
class RefreshMeter {
  public:
    using Clock = std::chrono::steady_clock;

    explicit RefreshMeter(std::size_t history = 120, double ewma_alpha = 0.2,
                          Clock::time_point origin = Clock::now());

    // Marks a fresh connection: the next closed window is warm-up and the
    // gap across the outage is not counted.
    void connected(Clock::time_point t);
    void record(Clock::time_point t);
    // Closes every window that ends at or before t.
    void roll(Clock::time_point t);

    std::vector<RefreshWindow> windows() const;
    std::optional<RefreshWindow> last() const;
    std::uint64_t total() const;

  private:
    void roll_locked(Clock::time_point t);
    std::int64_t wall_ms(Clock::time_point t) const;

    std::size_t history_;
    double alpha_;
    Clock::time_point origin_;
    std::int64_t origin_wall_ms_;

    mutable std::mutex mu_;
    std::uint64_t index_ = 0;
    std::uint32_t count_ = 0;
    double max_gap_ms_ = 0;
    std::optional<Clock::time_point> last_sample_;
    std::optional<double> ewma_;
    bool warm_pending_ = true;
    std::uint64_t total_ = 0;
    std::deque<RefreshWindow> closed_;
};

}  // namespace dtwin::twin
