#pragma once

#include "dtwin/kinematics/kinematics.hpp"
#include "dtwin/twin/events.hpp"
#include "dtwin/twin/refresh_stats.hpp"
#include "dtwin/twin/trajectory.hpp"
#include "dtwin/wire/messages.hpp"
#include "dtwin/wire/rws_client.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace dtwin::twin {

using SteadyClock = std::chrono::steady_clock;

enum class ConnectionState { Up, Degraded, Down };
std::string_view to_string(ConnectionState s);

enum class Stream { Joints, Tcp, Io, SpyLog };
inline constexpr std::array<Stream, 4> kStreams = {Stream::Joints, Stream::Tcp, Stream::Io, Stream::SpyLog};
std::string_view to_string(Stream s);  // "joints", "robtarget", "io", "spylog"

struct JointSample {
    kin::JointConfig q;
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    SteadyClock::time_point received;
};

struct TcpSample {
    kin::Pose pose;
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    SteadyClock::time_point received;
};

struct IoSample {
    wire::IoSnapshotMsg msg;
    SteadyClock::time_point received;
};

struct StreamHealth {
    ConnectionState state = ConnectionState::Down;
    int consecutive_failures = 0;
    std::string reason = "not connected";
};

// Snapshot of the twin. Each part is immutable and replaced whole, so a
// reader never sees half of one sample and half of the next.
struct TwinState {
    std::shared_ptr<const JointSample> joints;
    std::shared_ptr<const TcpSample> tcp;
    std::shared_ptr<const IoSample> io;
    std::shared_ptr<const std::deque<AbstractEvent>> events;
    std::shared_ptr<const std::deque<wire::SpyEvent>> spylog;
    std::uint64_t events_total = 0;  // events ever derived; the ring keeps the tail
    std::optional<std::string> phase;  // from the last PHASE spy log line
    ConnectionState connection = ConnectionState::Down;
    std::string reason;
    std::uint64_t version = 0;
};

double age_ms(SteadyClock::time_point received, SteadyClock::time_point now = SteadyClock::now());

struct TwinOptions {
    std::string controller_url;
    wire::DigestCredentials credentials;
    wire::RwsClientOptions client;
    std::chrono::milliseconds floor{0};  // minimum spacing of the always-on loops
    bool spylog = true;
    std::chrono::milliseconds spylog_period{100};
    std::chrono::milliseconds backoff_initial{100};
    std::chrono::milliseconds backoff_cap{2000};
    int down_after = 3;  // consecutive failures
    std::size_t events_capacity = 100;
    std::size_t spylog_capacity = 200;
    std::size_t stats_history = 120;
    kin::DhTable dh = kin::DhTable::irb120();
};

// The digital-twin client: one polling loop per stream against a
// controller, a shared state store, derived IO events and refresh metering.
class Twin {
  public:
    explicit Twin(TwinOptions opts);
    ~Twin();
    Twin(const Twin&) = delete;
    Twin& operator=(const Twin&) = delete;

    void start();
    void stop();
    bool running() const { return running_; }

    TwinState state() const;
    StreamHealth health(Stream s) const;

    // Blocks until the state version passes `seen` or the timeout expires.
    // Returns the current version.
    std::uint64_t wait_change(std::uint64_t seen, std::chrono::milliseconds timeout) const;
    // Blocks until pred holds for the current state. False on timeout.
    bool wait_until(const std::function<bool(const TwinState&)>& pred, std::chrono::milliseconds timeout) const;

    RefreshMeter& meter(Stream s) { return *meters_[static_cast<std::size_t>(s)]; }
    const RefreshMeter& meter(Stream s) const { return *meters_[static_cast<std::size_t>(s)]; }
    // Closes elapsed windows on every meter.
    void roll_meters();
    // One JSON object per closed window, line-delimited, all streams.
    void write_stats_jsonl(std::ostream& os) const;

    TrajectoryRecorder& recorder() { return recorder_; }
    const TwinOptions& options() const { return opts_; }

  private:
    void poll_loop(Stream s);
    void spylog_loop();
    bool apply(Stream s, const wire::HttpReply& reply, std::uint64_t& last_seq);
    void set_health(Stream s, StreamHealth h);
    void publish_locked();
    bool sleep_for(std::chrono::milliseconds d);

    TwinOptions opts_;
    std::array<std::unique_ptr<RefreshMeter>, 4> meters_;
    TrajectoryRecorder recorder_;

    std::atomic<bool> running_{false};
    std::atomic<bool> stop_{false};
    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    std::vector<std::thread> threads_;

    mutable std::mutex mu_;
    mutable std::condition_variable changed_;
    TwinState state_;
    std::array<StreamHealth, 4> health_;
};

}  // namespace dtwin::twin
