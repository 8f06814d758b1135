#include "dtwin/motion/gateway.hpp"

#include <cmath>
#include <sstream>

namespace dtwin::motion {

using namespace std::chrono_literals;
using SteadyClock = std::chrono::steady_clock;

std::optional<PointerAction> parse_pointer(std::string_view s) {
    if (s == "reset") return PointerAction::Reset;
    if (s == "start") return PointerAction::Start;
    if (s == "stop") return PointerAction::Stop;
    return std::nullopt;
}

std::string_view to_string(TicketStatus s) {
    switch (s) {
        case TicketStatus::Pending: return "pending";
        case TicketStatus::Done: return "done";
        case TicketStatus::Failed: return "failed";
    }
    return "?";
}

nlohmann::ordered_json to_json(const GatewayError& e) {
    nlohmann::ordered_json j;
    j["error"] = e.code();
    j["message"] = e.what();
    if (!e.field().empty()) j["field"] = e.field();
    if (e.joint()) j["joint"] = *e.joint();
    if (e.retry_after_ms) j["retry_after_ms"] = *e.retry_after_ms;
    return j;
}

namespace {

nlohmann::ordered_json pose_json(const kin::Pose& p) {
    nlohmann::ordered_json j;
    j["pos"] = {p.position.x(), p.position.y(), p.position.z()};
    j["quat"] = {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()};
    return j;
}

bool motion_kind(const Ticket& t) { return t.kind == "jog" || t.kind == "linear"; }

}  // namespace

nlohmann::ordered_json to_json(const Ticket& t) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["kind"] = t.kind;
    j["status"] = to_string(t.status);
    if (!t.reason.empty()) j["reason"] = t.reason;
    if (t.target) j["target_deg"] = t.target->degrees();
    if (t.target_pose) j["target_pose"] = pose_json(*t.target_pose);
    if (t.ik) {
        j["ik"] = {{"converged", t.ik->converged},
                   {"iterations", t.ik->iterations},
                   {"pos_err_mm", t.ik->pos_err},
                   {"orient_err_rad", t.ik->orient_err}};
    }
    if (t.io) j["io"] = {{"name", t.io->first}, {"value", t.io->second}};
    if (t.final_joints) j["final_deg"] = t.final_joints->degrees();
    if (t.final_pos_err_mm) j["final_pos_err_mm"] = *t.final_pos_err_mm;
    if (t.elapsed_ms) j["elapsed_ms"] = *t.elapsed_ms;
    return j;
}

MotionGateway::MotionGateway(twin::Twin& twin, GatewayOptions opts)
    : twin_(twin),
      opts_(std::move(opts)),
      client_(twin.options().controller_url, twin.options().credentials, twin.options().client) {
    monitor_ = std::thread([this] { monitor_loop(); });
}

MotionGateway::~MotionGateway() {
    stop_ = true;
    if (monitor_.joinable()) monitor_.join();
}

void MotionGateway::ensure_connected() const {
    const auto s = twin_.state();
    if (s.connection == twin::ConnectionState::Down) {
        throw GatewayError(503, "unavailable", "controller is down: " + s.reason);
    }
}

void MotionGateway::post(const std::string& target, const std::string& body) {
    std::lock_guard lock(dispatch_mu_);
    wire::HttpReply reply;
    try {
        reply = client_.post(target, body);
    } catch (const std::exception& e) {
        throw GatewayError(503, "unavailable", e.what());
    }
    if (reply.ok()) return;
    wire::ErrorMsg err;
    try {
        err = wire::decode_error(reply.body);
    } catch (const std::exception&) {
        err.code = "controller_error";
        err.message = "controller replied HTTP " + std::to_string(reply.status);
    }
    throw GatewayError(reply.status, err.code, err.message, "", err.joint);
}

std::uint64_t MotionGateway::register_ticket(Ticket t) {
    std::lock_guard lock(mu_);
    t.id = next_id_++;
    const auto id = t.id;
    tickets_.emplace(id, std::move(t));
    while (tickets_.size() > opts_.ticket_history) {
        auto it = std::find_if(tickets_.begin(), tickets_.end(),
                               [](const auto& kv) { return kv.second.status != TicketStatus::Pending; });
        if (it == tickets_.end()) break;
        last_seen_.erase(it->first);
        tickets_.erase(it);
    }
    resolved_.notify_all();
    return id;
}

Ticket MotionGateway::pointer_op(PointerAction action) {
    ensure_connected();
    static constexpr const char* names[] = {"resetpp", "start", "stop"};
    Ticket t;
    t.kind = "pointer";
    t.created = SteadyClock::now();
    post(std::string(wire::path::kExecution) + "?action=" + names[static_cast<int>(action)], "");
    t.acked = SteadyClock::now();
    t.status = TicketStatus::Done;
    t.elapsed_ms = std::chrono::duration<double, std::milli>(t.acked - t.created).count();
    t.id = register_ticket(t);
    return t;
}

Ticket MotionGateway::set_do(const std::string& name, int value) {
    if (name.empty()) throw GatewayError(400, "invalid", "signal name is required", "name");
    if (value != 0 && value != 1) throw GatewayError(400, "invalid", "signal value must be 0 or 1", "value");
    ensure_connected();
    Ticket t;
    t.kind = "do";
    t.io = {name, value};
    t.created = SteadyClock::now();
    post(wire::path::signal(name) + "?action=set", nlohmann::json{{"value", value}}.dump());
    t.acked = SteadyClock::now();
    t.deadline = t.acked + opts_.io_timeout;
    t.id = register_ticket(t);
    return t;
}

Ticket MotionGateway::jog(const JogCommand& cmd) {
    for (std::size_t i = 0; i < 6; ++i) {
        if (!std::isfinite(cmd.joints_deg[i])) {
            throw GatewayError(400, "invalid", "joint " + std::to_string(i + 1) + " is not finite", "joints",
                               static_cast<int>(i + 1));
        }
    }
    ensure_connected();
    std::array<double, 6> target = cmd.joints_deg;
    if (cmd.mode == JogCommand::Mode::Relative) {
        const auto s = twin_.state();
        if (!s.joints) throw GatewayError(503, "unavailable", "no joint sample yet");
        const auto now = s.joints->q.degrees();
        for (std::size_t i = 0; i < 6; ++i) target[i] += now[i];
    }
    Ticket t;
    t.kind = "jog";
    return dispatch_motion(kin::JointConfig::from_degrees(target), std::move(t));
}

Ticket MotionGateway::linear_move(const LinearCommand& cmd) {
    const kin::Vector3d delta(cmd.dx, cmd.dy, cmd.dz);
    if (!delta.allFinite()) throw GatewayError(400, "invalid", "delta must be finite", "delta");
    if (delta.norm() > opts_.max_linear_mm) {
        std::ostringstream msg;
        msg << "delta of " << delta.norm() << " mm exceeds the " << opts_.max_linear_mm << " mm single-step limit";
        throw GatewayError(400, "invalid", msg.str(), "delta");
    }
    ensure_connected();
    const auto s = twin_.state();
    if (!s.joints || twin::age_ms(s.joints->received) > static_cast<double>(opts_.max_joint_age.count())) {
        GatewayError e(503, "stale", "joint sample is older than " + std::to_string(opts_.max_joint_age.count()) + " ms");
        e.retry_after_ms = static_cast<int>(opts_.max_joint_age.count());
        throw e;
    }
    const auto& dh = twin_.options().dh;
    const kin::JointConfig seed = s.joints->q;
    const kin::Pose target = kin::forward_kinematics(dh, seed).translated(delta);
    kin::IkProblem problem = opts_.solver.problem(target, seed);
    if (!cmd.keep_orientation) {
        problem.weights_task.tail<3>().setConstant(1e-6);
        problem.tol_orient = kin::kPi;
    }
    const kin::IkResult r = kin::solve_ik(dh, problem);
    if (!r.converged) {
        std::ostringstream msg;
        msg << "IK did not converge: best position error " << r.pos_err << " mm, orientation error " << r.orient_err
            << " rad after " << r.iterations << " iterations";
        throw GatewayError(422, "unreachable", msg.str(), "delta");
    }
    Ticket t;
    t.kind = "linear";
    t.target_pose = target;
    t.ik = r;
    t.ik->trace.clear();
    return dispatch_motion(r.solution, std::move(t));
}

Ticket MotionGateway::dispatch_motion(const kin::JointConfig& target, Ticket t) {
    const auto& dh = twin_.options().dh;
    if (const int j = dh.first_violation(target); j >= 0) {
        const auto& lim = dh.limits[static_cast<std::size_t>(j)];
        std::ostringstream msg;
        msg << "joint " << j + 1 << " value " << kin::rad2deg(target.q[j]) << " deg outside ["
            << kin::rad2deg(lim.min) << ", " << kin::rad2deg(lim.max) << "]";
        throw GatewayError(400, "limit", msg.str(), "joints", j + 1);
    }
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, other] : tickets_) {
            if (other.status == TicketStatus::Pending && motion_kind(other)) {
                throw GatewayError(409, "busy", "motion ticket " + std::to_string(id) + " is still in flight");
            }
        }
    }
    const auto s = twin_.state();
    double nominal_s = 0;
    if (s.joints) {
        for (std::size_t i = 0; i < 6; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            nominal_s = std::max(nominal_s, std::abs(target.q[k] - s.joints->q.q[k]) / dh.speed_limits[i]);
        }
    }
    t.target = target;
    t.created = SteadyClock::now();
    ++jog_posts_;
    post(std::string(wire::path::kJogSymbol) + "?action=set", wire::encode(wire::JogTargetMsg{target.degrees()}));
    t.acked = SteadyClock::now();
    t.deadline = t.acked +
                 std::chrono::duration_cast<SteadyClock::duration>(
                     std::chrono::duration<double>(opts_.timeout_factor * nominal_s)) +
                 opts_.timeout_grace;
    t.id = register_ticket(t);
    return t;
}

void MotionGateway::resolve(Ticket& t, const twin::TwinState& s, SteadyClock::time_point now) {
    auto finish = [&](TicketStatus st, std::string reason) {
        t.status = st;
        t.reason = std::move(reason);
        t.elapsed_ms = std::chrono::duration<double, std::milli>(now - t.created).count();
    };

    if (t.kind == "do") {
        if (s.io && s.io->received > t.acked) {
            const auto* sig = s.io->msg.find(t.io->first);
            if (sig && sig->value == t.io->second) return finish(TicketStatus::Done, "");
        }
    } else if (motion_kind(t) && s.joints && s.joints->received > t.acked) {
        const auto tol = kin::deg2rad(opts_.settle_tol_deg);
        const bool within = ((s.joints->q.q - t.target->q).cwiseAbs().array() <= tol).all();
        auto& prev = last_seen_[t.id];
        const bool stationary = prev && prev->timestamp_ms != s.joints->timestamp_ms &&
                                ((prev->q.q - s.joints->q.q).cwiseAbs().array() <= 1e-9).all();
        if (!prev || prev->timestamp_ms != s.joints->timestamp_ms) prev = *s.joints;
        if (within && stationary) {
            t.final_joints = s.joints->q;
            if (t.target_pose) {
                const auto fk = kin::forward_kinematics(twin_.options().dh, s.joints->q);
                t.final_pos_err_mm = (fk.position - t.target_pose->position).norm();
            }
            return finish(TicketStatus::Done, "");
        }
    }
    if (now > t.deadline) {
        const auto budget = std::chrono::duration<double, std::milli>(t.deadline - t.acked).count();
        std::ostringstream msg;
        msg << "timeout: target not reached within " << budget << " ms";
        if (s.joints && t.target) msg << " (max joint error " << kin::rad2deg((s.joints->q.q - t.target->q).cwiseAbs().maxCoeff()) << " deg)";
        finish(TicketStatus::Failed, msg.str());
    }
}

void MotionGateway::monitor_loop() {
    std::uint64_t seen = 0;
    while (!stop_) {
        bool pending = false;
        {
            std::unique_lock lock(mu_);
            pending = std::any_of(tickets_.begin(), tickets_.end(),
                                  [](const auto& kv) { return kv.second.status == TicketStatus::Pending; });
            if (!pending) {
                resolved_.wait_for(lock, 20ms);
                continue;
            }
        }
        seen = twin_.wait_change(seen, 20ms);
        const auto s = twin_.state();
        const auto now = SteadyClock::now();
        std::lock_guard lock(mu_);
        bool changed = false;
        for (auto& [id, t] : tickets_) {
            if (t.status != TicketStatus::Pending) continue;
            resolve(t, s, now);
            if (t.status != TicketStatus::Pending) {
                last_seen_.erase(id);
                changed = true;
            }
        }
        if (changed) resolved_.notify_all();
    }
}

std::optional<Ticket> MotionGateway::ticket(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    auto it = tickets_.find(id);
    if (it == tickets_.end()) return std::nullopt;
    return it->second;
}

std::optional<Ticket> MotionGateway::wait(std::uint64_t id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    resolved_.wait_for(lock, timeout, [&] {
        auto it = tickets_.find(id);
        return it == tickets_.end() || it->second.status != TicketStatus::Pending;
    });
    auto it = tickets_.find(id);
    if (it == tickets_.end()) return std::nullopt;
    return it->second;
}

}  // namespace dtwin::motion
