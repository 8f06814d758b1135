#include "dtwin/emulator/workcell.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dtwin::emu {

using kin::JointConfig;
using wire::SignalKind;

namespace {

constexpr std::array<std::string_view, 8> kPhaseNames = {"IDLE", "SPAWN", "RECOGNIZE", "CONVEY",
                                                          "AT_B", "PICK", "PLACE", "RETURN"};

JointConfig deg(double a, double b, double c, double d, double e, double f) {
    const std::array<double, 6> v{a, b, c, d, e, f};
    return JointConfig::from_degrees(v);
}

std::size_t shape_index(Shape s) { return static_cast<std::size_t>(s); }

}  // namespace

std::string_view to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }

std::string_view to_string(Shape s) {
    switch (s) {
        case Shape::Square: return "square";
        case Shape::Rectangle: return "rectangle";
        case Shape::Circle: return "circle";
    }
    return "?";
}

std::string_view to_string(PieceLocation l) {
    switch (l) {
        case PieceLocation::A: return "A";
        case PieceLocation::Conveyor: return "conveyor";
        case PieceLocation::B: return "B";
        case PieceLocation::Gripped: return "gripped";
        case PieceLocation::PalletSlot: return "pallet_slot";
    }
    return "?";
}

std::optional<Phase> parse_phase(std::string_view s) {
    for (std::size_t i = 0; i < kPhaseNames.size(); ++i) {
        if (kPhaseNames[i] == s) return static_cast<Phase>(i);
    }
    return std::nullopt;
}

std::optional<ExecutionAction> parse_action(std::string_view s) {
    if (s == "resetpp") return ExecutionAction::ResetPP;
    if (s == "start") return ExecutionAction::Start;
    if (s == "stop") return ExecutionAction::Stop;
    return std::nullopt;
}

std::string_view shape_signal(Shape s) {
    switch (s) {
        case Shape::Square: return "DO_3";
        case Shape::Rectangle: return "DO_4";
        case Shape::Circle: return "DO_5";
    }
    return "";
}

Waypoints Waypoints::defaults() {
    Waypoints w;
    w.home = JointConfig{};
    w.above_b = deg(-60, 20, 10, 0, 60, 0);
    w.at_b = deg(-60, 35, 15, 0, 40, 0);
    w.above_pallet = deg(60, 15, 5, 0, 70, 0);
    w.slot = {deg(45, 35, 15, 0, 40, 0), deg(60, 35, 15, 0, 40, 0), deg(75, 35, 15, 0, 40, 0)};
    return w;
}

CommandResult CommandResult::failure(int status, std::string code, std::string message,
                                     std::optional<int> joint) {
    CommandResult r;
    r.status = status;
    r.error = wire::ErrorMsg{std::move(code), std::move(message), joint};
    return r;
}

Workcell::Workcell(WorkcellConfig cfg)
    : cfg_(std::move(cfg)),
      motion_(cfg_.dh, cfg_.tick_hz, cfg_.speed_scale, cfg_.waypoints.home) {
    cfg_.dh.validate();
    for (const auto* wp : {&cfg_.waypoints.home, &cfg_.waypoints.above_b, &cfg_.waypoints.at_b,
                           &cfg_.waypoints.above_pallet, &cfg_.waypoints.slot[0],
                           &cfg_.waypoints.slot[1], &cfg_.waypoints.slot[2]}) {
        if (cfg_.dh.first_violation(*wp) >= 0) throw std::invalid_argument("waypoint outside joint limits");
    }
    for (std::string_view name : {"DO_3", "DO_4", "DO_5", "DO_GRIP", "DO_CONVEYOR"}) {
        signals_.push_back({std::string(name), SignalKind::DO, true, 0});
    }
    for (const auto& name : cfg_.free_outputs) signals_.push_back({name, SignalKind::DO, false, 0});
    signals_.push_back({"DI_IR", SignalKind::DI, true, 0});
    for (const auto& name : cfg_.free_inputs) signals_.push_back({name, SignalKind::DI, false, 0});
    log(wire::LogLevel::Info, "CONTROLLER ready");
}

std::int64_t Workcell::timestamp_ms() const {
    return cfg_.epoch_ms + static_cast<std::int64_t>(std::floor(static_cast<double>(ticks_) * 1000.0 / cfg_.tick_hz));
}

std::uint64_t Workcell::ticks_for(double seconds) const {
    return static_cast<std::uint64_t>(std::llround(seconds * cfg_.tick_hz));
}

void Workcell::log(wire::LogLevel level, std::string text) {
    spy_.push_back({++spy_seq_, timestamp_ms(), level, std::move(text)});
    if (spy_.size() > cfg_.spylog_capacity) {
        spy_.erase(spy_.begin(), spy_.begin() + static_cast<std::ptrdiff_t>(spy_.size() - cfg_.spylog_capacity));
    }
}

wire::SpyLogMsg Workcell::spylog(std::uint64_t since) const {
    wire::SpyLogMsg m;
    auto it = std::upper_bound(spy_.begin(), spy_.end(), since,
                               [](std::uint64_t s, const wire::SpyEvent& e) { return s < e.seq; });
    m.events.assign(it, spy_.end());
    m.next_since = m.events.empty() ? since : m.events.back().seq;
    return m;
}

void Workcell::set_script(std::string_view name, int value) {
    for (auto& s : signals_) {
        if (s.name == name) {
            s.script = value;
            return;
        }
    }
}

std::vector<wire::IoSignal> Workcell::io() const {
    std::vector<wire::IoSignal> out;
    out.reserve(signals_.size());
    for (const auto& s : signals_) {
        auto ov = override_values_.find(s.name);
        out.push_back({s.name, s.kind, ov != override_values_.end() ? ov->second : s.script});
    }
    return out;
}

int Workcell::io_value(std::string_view name) const {
    if (auto ov = override_values_.find(name); ov != override_values_.end()) return ov->second;
    for (const auto& s : signals_) {
        if (s.name == name) return s.script;
    }
    return 0;
}

void Workcell::reset_cell() {
    cell_.piece.reset();
    cell_.camera_busy = false;
    for (auto& s : signals_) {
        if (s.cycle_owned) s.script = 0;
    }
}

void Workcell::enter(Phase next) {
    const Phase prev = exec_.phase;
    exec_.phase = next;
    phase_ticks_ = 0;
    // the script rewrites its outputs on every transition
    for (const auto& name : overrides_) override_values_.erase(name);
    overrides_.clear();

    const auto& wp = cfg_.waypoints;
    switch (next) {
        case Phase::Idle:
            reset_cell();
            break;
        case Phase::Spawn:
            reset_cell();
            cell_.piece = Piece{next_shape_, PieceLocation::A, false, 0.0};
            next_shape_ = static_cast<Shape>((shape_index(next_shape_) + 1) % 3);
            break;
        case Phase::Recognize:
            cell_.camera_busy = true;
            break;
        case Phase::Convey:
            cell_.piece->location = PieceLocation::Conveyor;
            set_script("DO_CONVEYOR", 1);
            break;
        case Phase::AtB:
            cell_.piece->location = PieceLocation::B;
            set_script("DO_CONVEYOR", 0);
            set_script("DI_IR", 1);
            break;
        case Phase::Pick:
            motion_.enqueue(wp.above_b, MotionSource::Program);
            motion_.enqueue(wp.at_b, MotionSource::Program);
            break;
        case Phase::Place:
            motion_.enqueue(wp.above_b, MotionSource::Program);
            motion_.enqueue(wp.above_pallet, MotionSource::Program);
            motion_.enqueue(place_target(cell_.piece->shape), MotionSource::Program);
            break;
        case Phase::Return:
            motion_.enqueue(wp.above_pallet, MotionSource::Program);
            motion_.enqueue(wp.home, MotionSource::Program);
            break;
    }
    std::ostringstream msg;
    msg << "PHASE " << to_string(next) << " (from " << to_string(prev) << ", cycle " << exec_.cycle_count << ")";
    log(wire::LogLevel::Info, msg.str());
}

JointConfig Workcell::place_target(Shape shape) const {
    const auto& wp = cfg_.waypoints;
    const JointConfig base = wp.slot[shape_index(shape)];
    const int level = cell_.pallet[shape_index(shape)];
    if (level == 0) return base;
    kin::IkProblem p;
    p.target = kin::forward_kinematics(cfg_.dh, base).translated(
        kin::Vector3d(0, 0, wp.piece_height_mm * level));
    p.seed = base;
    const kin::IkResult r = kin::solve_ik(cfg_.dh, p);
    return r.converged ? r.solution : base;
}

void Workcell::advance_program() {
    ++phase_ticks_;
    const auto& t = cfg_.timings;
    switch (exec_.phase) {
        case Phase::Idle:
            break;
        case Phase::Spawn:
            if (phase_ticks_ >= ticks_for(t.spawn_s)) enter(Phase::Recognize);
            break;
        case Phase::Recognize:
            if (phase_ticks_ >= ticks_for(t.recognize_s)) {
                cell_.camera_busy = false;
                cell_.piece->recognized = true;
                set_script(shape_signal(cell_.piece->shape), 1);
                log(wire::LogLevel::Info, "CAMERA recognized " + std::string(to_string(cell_.piece->shape)));
                enter(Phase::Convey);
            }
            break;
        case Phase::Convey:
            if (io_value("DO_CONVEYOR") == 1) {
                cell_.piece->conveyor_progress += 1.0 / (t.convey_s * cfg_.tick_hz);
            }
            if (cell_.piece->conveyor_progress >= 1.0 - 1e-9) {
                cell_.piece->conveyor_progress = 1.0;
                enter(Phase::AtB);
            }
            break;
        case Phase::AtB:
            if (phase_ticks_ >= ticks_for(t.at_b_s)) enter(Phase::Pick);
            break;
        case Phase::Pick:
            if (motion_.idle(MotionSource::Program)) {
                set_script("DO_GRIP", 1);
                set_script("DI_IR", 0);
                cell_.piece->location = PieceLocation::Gripped;
                enter(Phase::Place);
            }
            break;
        case Phase::Place:
            if (motion_.idle(MotionSource::Program)) {
                set_script("DO_GRIP", 0);
                set_script(shape_signal(cell_.piece->shape), 0);
                cell_.piece->location = PieceLocation::PalletSlot;
                ++cell_.pallet[shape_index(cell_.piece->shape)];
                log(wire::LogLevel::Info, "PALLET stacked " + std::string(to_string(cell_.piece->shape)) +
                                              " (" + std::to_string(cell_.pallet[shape_index(cell_.piece->shape)]) + ")");
                enter(Phase::Return);
            }
            break;
        case Phase::Return:
            if (motion_.idle(MotionSource::Program)) {
                ++exec_.cycle_count;
                enter(Phase::Spawn);
            }
            break;
    }
}

void Workcell::tick() {
    motion_.tick(exec_.running);
    ++ticks_;
    if (exec_.running) advance_program();
}

CommandResult Workcell::execution(ExecutionAction action) {
    switch (action) {
        case ExecutionAction::ResetPP:
            exec_.running = false;
            exec_.resumable = false;
            exec_.pointer_at_main = true;
            motion_.clear(MotionSource::Program);
            log(wire::LogLevel::Info, "EXECUTION resetpp");
            enter(Phase::Idle);
            return {};
        case ExecutionAction::Start:
            if (exec_.running) return CommandResult::failure(409, "conflict", "RAPID execution is already running");
            if (!exec_.pointer_at_main && !exec_.resumable) {
                return CommandResult::failure(409, "conflict", "program pointer is not set; reset it to main");
            }
            exec_.running = true;
            exec_.pointer_at_main = false;
            exec_.resumable = false;
            log(wire::LogLevel::Info, "EXECUTION start");
            if (exec_.phase == Phase::Idle) enter(Phase::Spawn);
            return {};
        case ExecutionAction::Stop:
            if (exec_.running) {
                exec_.running = false;
                exec_.resumable = true;
                log(wire::LogLevel::Info, "EXECUTION stop");
            }
            return {};
    }
    return CommandResult::failure(400, "bad_request", "unknown execution action");
}

CommandResult Workcell::update_jog_target(const std::array<double, 6>& degrees) {
    if (exec_.running) {
        return CommandResult::failure(409, "busy", "the cycle program owns the arm; stop it before jogging");
    }
    for (std::size_t i = 0; i < 6; ++i) {
        if (!std::isfinite(degrees[i])) {
            return CommandResult::failure(400, "invalid", "joint " + std::to_string(i + 1) + " is not finite",
                                          static_cast<int>(i + 1));
        }
    }
    const JointConfig target = JointConfig::from_degrees(degrees);
    if (const int j = cfg_.dh.first_violation(target); j >= 0) {
        const auto& lim = cfg_.dh.limits[static_cast<std::size_t>(j)];
        std::ostringstream msg;
        msg << "joint " << j + 1 << " value " << degrees[static_cast<std::size_t>(j)] << " deg outside ["
            << kin::rad2deg(lim.min) << ", " << kin::rad2deg(lim.max) << "]";
        return CommandResult::failure(400, "limit", msg.str(), j + 1);
    }
    motion_.enqueue(target, MotionSource::Jog);
    std::ostringstream msg;
    msg << "JOG MoveAbsJ [";
    for (std::size_t i = 0; i < 6; ++i) msg << (i ? ", " : "") << degrees[i];
    msg << "]";
    log(wire::LogLevel::Info, msg.str());
    return {};
}

CommandResult Workcell::set_io(std::string_view name, int value) {
    auto it = std::find_if(signals_.begin(), signals_.end(), [&](const Signal& s) { return s.name == name; });
    if (it == signals_.end()) {
        return CommandResult::failure(404, "not_found", "unknown signal " + std::string(name));
    }
    if (it->kind == SignalKind::DI) {
        return CommandResult::failure(403, "forbidden", "signal " + std::string(name) + " is an input");
    }
    if (value != 0 && value != 1) return CommandResult::failure(400, "invalid", "signal value must be 0 or 1");
    if (it->cycle_owned) {
        override_values_[it->name] = value;
        overrides_.insert(it->name);
    } else {
        it->script = value;
    }
    log(wire::LogLevel::Warn, "IO " + std::string(name) + " set to " + std::to_string(value));
    return {};
}

std::optional<std::string> Workcell::check_invariants() const {
    if (exec_.running && exec_.phase == Phase::Idle) return "running while phase is IDLE";
    if (exec_.pointer_at_main && exec_.running) return "running with the pointer parked at main";
    if (!cfg_.dh.within_limits(motion_.current())) return "joints outside limits";

    const auto& piece = cell_.piece;
    auto expect = [&](std::string_view name, int want) -> std::optional<std::string> {
        if (overrides_.count(name)) return std::nullopt;
        if (io_value(name) != want) {
            return std::string(name) + " is " + std::to_string(io_value(name)) + ", expected " + std::to_string(want) +
                   " in phase " + std::string(to_string(exec_.phase));
        }
        return std::nullopt;
    };

    int lit = 0;
    for (Shape s : {Shape::Square, Shape::Rectangle, Shape::Circle}) {
        const bool active = piece && piece->recognized && piece->location != PieceLocation::PalletSlot &&
                            piece->shape == s;
        if (auto v = expect(shape_signal(s), active ? 1 : 0)) return v;
        if (!overrides_.count(shape_signal(s))) lit += io_value(shape_signal(s));
    }
    if (lit > 1) return "more than one shape light on";

    if (io_value("DI_IR") != (piece && piece->location == PieceLocation::B ? 1 : 0)) {
        return "DI_IR does not match piece at B";
    }
    if (auto v = expect("DO_CONVEYOR", exec_.phase == Phase::Convey ? 1 : 0)) return v;
    if (auto v = expect("DO_GRIP", piece && piece->location == PieceLocation::Gripped ? 1 : 0)) return v;
    if (exec_.phase == Phase::Recognize && !cell_.camera_busy) return "camera idle during RECOGNIZE";
    if (exec_.phase != Phase::Recognize && cell_.camera_busy) return "camera busy outside RECOGNIZE";
    return std::nullopt;
}

}  // namespace dtwin::emu
