#include "dtwin/twin/twin.hpp"

#include <ostream>

namespace dtwin::twin {

using namespace std::chrono_literals;

std::string_view to_string(ConnectionState s) {
    switch (s) {
        case ConnectionState::Up: return "up";
        case ConnectionState::Degraded: return "degraded";
        case ConnectionState::Down: return "down";
    }
    return "?";
}

std::string_view to_string(Stream s) {
    switch (s) {
        case Stream::Joints: return "joints";
        case Stream::Tcp: return "robtarget";
        case Stream::Io: return "io";
        case Stream::SpyLog: return "spylog";
    }
    return "?";
}

double age_ms(SteadyClock::time_point received, SteadyClock::time_point now) {
    return std::chrono::duration<double, std::milli>(now - received).count();
}

namespace {

std::string_view target_of(Stream s) {
    switch (s) {
        case Stream::Joints: return wire::path::kJointTarget;
        case Stream::Tcp: return wire::path::kRobTarget;
        case Stream::Io: return wire::path::kSignals;
        case Stream::SpyLog: return wire::path::kSpyLog;
    }
    return "";
}

std::string describe_failure(const wire::HttpReply& r) {
    std::string msg = "controller replied HTTP " + std::to_string(r.status);
    try {
        const auto e = wire::decode_error(r.body);
        msg += ": " + e.message;
    } catch (const std::exception&) {
    }
    return msg;
}

}  // namespace

Twin::Twin(TwinOptions opts) : opts_(std::move(opts)), recorder_(opts_.dh) {
    for (auto& m : meters_) m = std::make_unique<RefreshMeter>(opts_.stats_history);
    state_.events = std::make_shared<const std::deque<AbstractEvent>>();
    state_.spylog = std::make_shared<const std::deque<wire::SpyEvent>>();
    state_.reason = "not connected";
}

Twin::~Twin() { stop(); }

void Twin::start() {
    if (running_) return;
    stop_ = false;
    running_ = true;
    const auto origin = SteadyClock::now();
    for (auto& m : meters_) m = std::make_unique<RefreshMeter>(opts_.stats_history, 0.2, origin);
    for (Stream s : {Stream::Joints, Stream::Tcp, Stream::Io}) threads_.emplace_back([this, s] { poll_loop(s); });
    if (opts_.spylog) threads_.emplace_back([this] { spylog_loop(); });
}

void Twin::stop() {
    if (!running_) return;
    {
        std::lock_guard lock(stop_mu_);
        stop_ = true;
    }
    stop_cv_.notify_all();
    for (auto& t : threads_) t.join();
    threads_.clear();
    running_ = false;
    std::lock_guard lock(mu_);
    for (auto& h : health_) h = {};
    state_.connection = ConnectionState::Down;
    state_.reason = "stopped";
    publish_locked();
}

bool Twin::sleep_for(std::chrono::milliseconds d) {
    std::unique_lock lock(stop_mu_);
    return stop_cv_.wait_for(lock, d, [this] { return stop_.load(); });
}

TwinState Twin::state() const {
    std::lock_guard lock(mu_);
    return state_;
}

StreamHealth Twin::health(Stream s) const {
    std::lock_guard lock(mu_);
    return health_[static_cast<std::size_t>(s)];
}

std::uint64_t Twin::wait_change(std::uint64_t seen, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    changed_.wait_for(lock, timeout, [&] { return state_.version > seen; });
    return state_.version;
}

bool Twin::wait_until(const std::function<bool(const TwinState&)>& pred, std::chrono::milliseconds timeout) const {
    const auto deadline = SteadyClock::now() + timeout;
    std::unique_lock lock(mu_);
    while (!pred(state_)) {
        if (changed_.wait_until(lock, deadline) == std::cv_status::timeout) return pred(state_);
    }
    return true;
}

void Twin::publish_locked() {
    ++state_.version;
    changed_.notify_all();
}

void Twin::set_health(Stream s, StreamHealth h) {
    std::lock_guard lock(mu_);
    auto& slot = health_[static_cast<std::size_t>(s)];
    const bool same = slot.state == h.state && slot.reason == h.reason;
    slot = std::move(h);

    ConnectionState agg = ConnectionState::Up;
    std::string reason;
    for (Stream t : {Stream::Joints, Stream::Tcp, Stream::Io}) {
        const auto& th = health_[static_cast<std::size_t>(t)];
        if (static_cast<int>(th.state) > static_cast<int>(agg)) {
            agg = th.state;
            reason = std::string(to_string(t)) + ": " + th.reason;
        }
    }
    if (!same || agg != state_.connection) {
        state_.connection = agg;
        state_.reason = reason;
        publish_locked();
    }
}

bool Twin::apply(Stream s, const wire::HttpReply& reply, std::uint64_t& last_seq) {
    const auto now = SteadyClock::now();
    switch (s) {
        case Stream::Joints: {
            const auto m = wire::decode_joint_target(reply.body);
            if (m.seq <= last_seq) return false;
            last_seq = m.seq;
            auto sample = std::make_shared<JointSample>();
            sample->q = kin::JointConfig::from_degrees(m.joints);
            sample->seq = m.seq;
            sample->timestamp_ms = m.timestamp_ms;
            sample->received = now;
            recorder_.on_joints(m.seq, m.timestamp_ms, sample->q);
            std::lock_guard lock(mu_);
            state_.joints = std::move(sample);
            publish_locked();
            return true;
        }
        case Stream::Tcp: {
            const auto m = wire::decode_rob_target(reply.body);
            if (m.seq <= last_seq) return false;
            last_seq = m.seq;
            auto sample = std::make_shared<TcpSample>();
            sample->pose.position = {m.x, m.y, m.z};
            sample->pose.orientation = kin::Quaterniond(m.q1, m.q2, m.q3, m.q4);
            sample->seq = m.seq;
            sample->timestamp_ms = m.timestamp_ms;
            sample->received = now;
            recorder_.on_tcp(m.seq, m.timestamp_ms, sample->pose);
            std::lock_guard lock(mu_);
            state_.tcp = std::move(sample);
            publish_locked();
            return true;
        }
        case Stream::Io: {
            auto m = wire::decode_io_snapshot(reply.body);
            if (m.seq <= last_seq) return false;
            last_seq = m.seq;
            auto sample = std::make_shared<IoSample>();
            sample->msg = std::move(m);
            sample->received = now;
            std::lock_guard lock(mu_);
            if (state_.io) {
                auto fresh = derive_events(state_.io->msg, sample->msg);
                if (!fresh.empty()) {
                    auto ring = std::make_shared<std::deque<AbstractEvent>>(*state_.events);
                    for (auto& e : fresh) ring->push_back(std::move(e));
                    while (ring->size() > opts_.events_capacity) ring->pop_front();
                    state_.events_total += fresh.size();
                    state_.events = std::move(ring);
                }
            }
            state_.io = std::move(sample);
            publish_locked();
            return true;
        }
        case Stream::SpyLog: break;
    }
    return false;
}

void Twin::poll_loop(Stream s) {
    wire::RwsClient client(opts_.controller_url, opts_.credentials, opts_.client);
    const std::string target(target_of(s));
    auto backoff = opts_.backoff_initial;
    bool up = false;
    std::uint64_t last_seq = 0;
    int failures = 0;

    while (!stop_) {
        const auto t0 = SteadyClock::now();
        std::string failure;
        bool auth = false;
        try {
            const auto reply = client.get(target);
            if (!reply.ok()) {
                failure = describe_failure(reply);
            } else {
                const auto now = SteadyClock::now();
                if (!up) meter(s).connected(now);
                apply(s, reply, last_seq);
                meter(s).record(now);
                if (!up || failures) set_health(s, {ConnectionState::Up, 0, ""});
                up = true;
                failures = 0;
                backoff = opts_.backoff_initial;
            }
        } catch (const wire::AuthError& e) {
            failure = std::string("authentication rejected: ") + e.what();
            auth = true;
        } catch (const std::exception& e) {
            failure = e.what();
        }

        if (!failure.empty()) {
            ++failures;
            const bool was_down = !up && health(s).state == ConnectionState::Down;
            const bool down = auth || failures >= opts_.down_after || was_down;
            set_health(s, {down ? ConnectionState::Down : ConnectionState::Degraded, failures, failure});
            up = false;
            last_seq = 0;
            if (sleep_for(backoff)) break;
            backoff = std::min(backoff * 2, opts_.backoff_cap);
            continue;
        }
        if (opts_.floor > 0ms) {
            const auto wait = opts_.floor - std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - t0);
            if (wait > 0ms && sleep_for(wait)) break;
        }
    }
}

void Twin::spylog_loop() {
    wire::RwsClient client(opts_.controller_url, opts_.credentials, opts_.client);
    auto backoff = opts_.backoff_initial;
    std::uint64_t since = 0;
    int failures = 0;
    while (!stop_) {
        const auto t0 = SteadyClock::now();
        std::string failure;
        try {
            const auto reply = client.get(std::string(wire::path::kSpyLog) + "?since=" + std::to_string(since));
            if (!reply.ok()) {
                failure = describe_failure(reply);
            } else {
                const auto m = wire::decode_spy_log(reply.body);
                meter(Stream::SpyLog).record(SteadyClock::now());
                std::vector<wire::SpyEvent> fresh;
                for (const auto& e : m.events) {
                    if (e.seq > since) fresh.push_back(e);
                }
                if (!fresh.empty()) {
                    since = fresh.back().seq;
                    std::lock_guard lock(mu_);
                    auto ring = std::make_shared<std::deque<wire::SpyEvent>>(*state_.spylog);
                    for (auto& e : fresh) {
                        if (e.text.rfind("PHASE ", 0) == 0) {
                            const auto end = e.text.find(' ', 6);
                            state_.phase = e.text.substr(6, end == std::string::npos ? end : end - 6);
                        }
                        ring->push_back(std::move(e));
                    }
                    while (ring->size() > opts_.spylog_capacity) ring->pop_front();
                    state_.spylog = std::move(ring);
                    publish_locked();
                }
                if (failures) set_health(Stream::SpyLog, {ConnectionState::Up, 0, ""});
                failures = 0;
                backoff = opts_.backoff_initial;
            }
        } catch (const std::exception& e) {
            failure = e.what();
        }
        if (!failure.empty()) {
            ++failures;
            set_health(Stream::SpyLog,
                       {failures >= opts_.down_after ? ConnectionState::Down : ConnectionState::Degraded, failures,
                        failure});
            if (sleep_for(backoff)) break;
            backoff = std::min(backoff * 2, opts_.backoff_cap);
            continue;
        }
        const auto wait =
            opts_.spylog_period - std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - t0);
        if (wait > 0ms && sleep_for(wait)) break;
    }
}

void Twin::roll_meters() {
    const auto now = SteadyClock::now();
    for (auto& m : meters_) m->roll(now);
}

void Twin::write_stats_jsonl(std::ostream& os) const {
    for (Stream s : kStreams) {
        for (const auto& w : meter(s).windows()) os << to_json(w, to_string(s)).dump() << '\n';
    }
}

}  // namespace dtwin::twin
