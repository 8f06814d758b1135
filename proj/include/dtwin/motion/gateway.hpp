#pragma once

#include "dtwin/kinematics/config.hpp"
#include "dtwin/twin/twin.hpp"
#include "dtwin/wire/rws_client.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

namespace dtwin::motion {

enum class PointerAction { Reset, Start, Stop };
std::optional<PointerAction> parse_pointer(std::string_view s);  // "reset", "start", "stop"

struct JogCommand {
    enum class Mode { Absolute, Relative };
    Mode mode = Mode::Absolute;
    std::array<double, 6> joints_deg{};
};

struct LinearCommand {
    double dx = 0, dy = 0, dz = 0;  // mm, base frame
    bool keep_orientation = true;
};

// A rejected command. `status` follows HTTP: 400 invalid or limit, 403/404
// from the controller, 409 busy or conflict, 422 unreachable, 503
// unavailable or stale.
class GatewayError : public std::runtime_error {
  public:
    GatewayError(int status, std::string code, const std::string& message, std::string field = "",
                 std::optional<int> joint = std::nullopt)
        : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)),
          joint_(joint) {}

    int status() const { return status_; }
    const std::string& code() const { return code_; }
    const std::string& field() const { return field_; }
    std::optional<int> joint() const { return joint_; }
    std::optional<int> retry_after_ms;

  private:
    int status_;
    std::string code_;
    std::string field_;
    std::optional<int> joint_;
};

nlohmann::ordered_json to_json(const GatewayError& e);

enum class TicketStatus { Pending, Done, Failed };
std::string_view to_string(TicketStatus s);

struct Ticket {
    std::uint64_t id = 0;
    std::string kind;  // pointer, jog, linear, do
    TicketStatus status = TicketStatus::Pending;
    std::string reason;
    std::optional<kin::JointConfig> target;        // motion tickets
    std::optional<kin::IkResult> ik;               // linear tickets
    std::optional<kin::Pose> target_pose;          // linear tickets
    std::optional<kin::JointConfig> final_joints;  // joints the motion settled at
    std::optional<double> final_pos_err_mm;        // linear: |FK(final) - target|
    std::optional<std::pair<std::string, int>> io; // do tickets
    std::chrono::steady_clock::time_point created;
    std::chrono::steady_clock::time_point acked;
    std::chrono::steady_clock::time_point deadline;
    std::optional<double> elapsed_ms;
};

nlohmann::ordered_json to_json(const Ticket& t);

struct GatewayOptions {
    double settle_tol_deg = 0.05;
    double timeout_factor = 2.0;
    std::chrono::milliseconds timeout_grace{250};
    std::chrono::milliseconds io_timeout{2000};
    double max_linear_mm = 300.0;
    std::chrono::milliseconds max_joint_age{100};
    kin::SolverDefaults solver;
    std::size_t ticket_history = 1000;
};

// The control side of the twin. Sends commands to the controller through
// one serialized dispatcher and tracks their effect on the twin's streams
// as tickets.
class MotionGateway {
  public:
    MotionGateway(twin::Twin& twin, GatewayOptions opts = {});
    ~MotionGateway();
    MotionGateway(const MotionGateway&) = delete;
    MotionGateway& operator=(const MotionGateway&) = delete;

    // Each call either returns a ticket or throws GatewayError; nothing is
    // sent to the controller when a pre-check fails.
    Ticket pointer_op(PointerAction action);
    Ticket jog(const JogCommand& cmd);
    Ticket linear_move(const LinearCommand& cmd);
    Ticket set_do(const std::string& name, int value);

    std::optional<Ticket> ticket(std::uint64_t id) const;
    // Blocks until the ticket leaves Pending or the timeout expires.
    std::optional<Ticket> wait(std::uint64_t id, std::chrono::milliseconds timeout) const;

    // Number of symbol-update POSTs sent so far.
    std::uint64_t jog_posts() const { return jog_posts_; }
    const GatewayOptions& options() const { return opts_; }

  private:
    void ensure_connected() const;
    void post(const std::string& target, const std::string& body);
    Ticket dispatch_motion(const kin::JointConfig& target, Ticket t);
    std::uint64_t register_ticket(Ticket t);
    void monitor_loop();
    void resolve(Ticket& t, const twin::TwinState& s, std::chrono::steady_clock::time_point now);

    twin::Twin& twin_;
    GatewayOptions opts_;

    std::mutex dispatch_mu_;
    wire::RwsClient client_;
    std::atomic<std::uint64_t> jog_posts_{0};

    mutable std::mutex mu_;
    mutable std::condition_variable resolved_;
    std::map<std::uint64_t, Ticket> tickets_;
    std::map<std::uint64_t, std::optional<twin::JointSample>> last_seen_;  // settle tracking per ticket
    std::uint64_t next_id_ = 1;

    std::atomic<bool> stop_{false};
    std::thread monitor_;
};

}  // namespace dtwin::motion
