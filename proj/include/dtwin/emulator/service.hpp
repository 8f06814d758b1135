#pragma once

#include "dtwin/emulator/workcell.hpp"
#include "dtwin/wire/digest.hpp"

#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace dtwin::emu {

struct EmulatorConfig {
    WorkcellConfig workcell;
    wire::DigestCredentials credentials;
    std::string host = "127.0.0.1";
    int port = 0;                 // 0 picks a free port
    int camera_delay_ms = 0;      // added to every GET while the camera is busy
    std::uint64_t seed = 0;       // nonce generator; 0 = random
    bool log_to_stdout = false;
    std::size_t trajectory_capacity = 250 * 120;
    int http_threads = 32;
};

// Reads an emulator config file (JSON). Keys: the kinematics keys of
// kin::dh_table_from_json plus "timings" {spawn_s, recognize_s, convey_s,
// at_b_s}, "waypoints_deg" {home, above_b, at_b, above_pallet, slots[3]},
// "piece_height_mm", "tick_hz", "speed_scale", "camera_delay_ms",
// "credentials" {username, password, realm, nonce_lifetime_s}.
EmulatorConfig emulator_config_from_json(const nlohmann::json& j);

class StartupError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct EmulatorSnapshot {
    std::uint64_t tick = 0;
    std::int64_t timestamp_ms = 0;
    kin::JointConfig joints;
    kin::Pose tcp;
    std::vector<wire::IoSignal> io;
    RapidExecutionState exec;
    WorkcellState cell;
};

struct TrajectorySample {
    std::uint64_t tick = 0;
    std::int64_t timestamp_ms = 0;
    kin::JointConfig q;
    kin::Pose tcp;
};

// The controller emulator: a Workcell advanced by one ticking thread at
// tick_hz, served over HTTP behind digest auth. Handlers never touch the
// Workcell directly; they read published snapshots and queue commands that
// the tick thread applies between ticks.
class Emulator {
  public:
    explicit Emulator(EmulatorConfig cfg);
    ~Emulator();
    Emulator(const Emulator&) = delete;
    Emulator& operator=(const Emulator&) = delete;

    // Binds and starts ticking. Returns the bound port.
    int start();
    void stop();
    bool running() const { return running_; }

    int port() const { return port_; }
    std::string url() const;

    std::shared_ptr<const EmulatorSnapshot> snapshot() const;
    std::vector<TrajectorySample> trajectory_log() const;
    wire::SpyLogMsg spylog(std::uint64_t since) const;

    // In-process equivalents of the control endpoints.
    CommandResult execution(ExecutionAction action);
    CommandResult update_jog_target(const std::array<double, 6>& degrees);
    CommandResult set_io(const std::string& name, int value);

    void set_camera_delay_ms(int ms) { camera_delay_ms_ = ms; }
    const EmulatorConfig& config() const { return cfg_; }

    // Blocks until the tick thread has advanced `n` more ticks.
    void wait_ticks(std::uint64_t n) const;

  private:
    struct Http;
    using Command = std::function<CommandResult(Workcell&)>;

    CommandResult submit(Command cmd);
    void tick_loop();
    void publish();
    void install_routes();

    EmulatorConfig cfg_;
    std::unique_ptr<Workcell> cell_;
    std::unique_ptr<Http> http_;
    wire::DigestVerifier verifier_;

    std::atomic<bool> running_{false};
    std::atomic<bool> stop_{false};
    std::atomic<int> camera_delay_ms_{0};
    int port_ = 0;
    std::thread tick_thread_;
    std::thread http_thread_;

    mutable std::mutex snap_mu_;
    mutable std::condition_variable snap_cv_;
    std::shared_ptr<const EmulatorSnapshot> snap_;

    std::mutex cmd_mu_;
    std::vector<std::pair<Command, std::promise<CommandResult>>> cmds_;

    mutable std::mutex log_mu_;
    std::deque<TrajectorySample> trajectory_;
    std::vector<wire::SpyEvent> spy_;
    std::uint64_t spy_copied_ = 0;

    std::atomic<std::uint64_t> seq_joint_{0};
    std::atomic<std::uint64_t> seq_rob_{0};
    std::atomic<std::uint64_t> seq_io_{0};
};

}  // namespace dtwin::emu
