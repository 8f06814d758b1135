#pragma once

#include "dtwin/emulator/motion_executor.hpp"
#include "dtwin/kinematics/kinematics.hpp"
#include "dtwin/wire/messages.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dtwin::emu {

enum class Phase { Idle, Spawn, Recognize, Convey, AtB, Pick, Place, Return };
enum class Shape { Square, Rectangle, Circle };
enum class PieceLocation { A, Conveyor, B, Gripped, PalletSlot };
enum class ExecutionAction { ResetPP, Start, Stop };

std::string_view to_string(Phase p);
std::string_view to_string(Shape s);
std::string_view to_string(PieceLocation l);
std::optional<Phase> parse_phase(std::string_view s);
std::optional<ExecutionAction> parse_action(std::string_view s);

// Indicator light wired to each recognition result.
std::string_view shape_signal(Shape s);

struct RapidExecutionState {
    bool pointer_at_main = true;
    bool running = false;
    bool resumable = false;  // stopped mid-program; start continues where it left off
    Phase phase = Phase::Idle;
    std::uint64_t cycle_count = 0;
};

struct Piece {
    Shape shape = Shape::Square;
    PieceLocation location = PieceLocation::A;
    bool recognized = false;
    double conveyor_progress = 0.0;  // 0..1
};

struct WorkcellState {
    std::optional<Piece> piece;
    std::array<int, 3> pallet{};  // stacked pieces per shape
    bool camera_busy = false;
};

struct CycleTimings {
    double spawn_s = 0.5;
    double recognize_s = 1.5;
    double convey_s = 2.0;
    double at_b_s = 0.2;
};

// Joint-space waypoints of the stacking program (radians).
struct Waypoints {
    kin::JointConfig home;
    kin::JointConfig above_b;
    kin::JointConfig at_b;
    kin::JointConfig above_pallet;
    std::array<kin::JointConfig, 3> slot;  // lowest stack level, per shape
    double piece_height_mm = 20.0;

    static Waypoints defaults();
};

struct WorkcellConfig {
    kin::DhTable dh = kin::DhTable::irb120();
    CycleTimings timings;
    Waypoints waypoints = Waypoints::defaults();
    double tick_hz = 250.0;
    double speed_scale = 1.0;
    std::int64_t epoch_ms = 0;  // wall-clock time of tick 0
    std::vector<std::string> free_outputs = {"DO_1", "DO_2", "DO_6", "DO_7", "DO_8"};
    std::vector<std::string> free_inputs = {"DI_1", "DI_2", "DI_3", "DI_4"};
    std::size_t spylog_capacity = 10000;
};

// Reply of a control command, mapped 1:1 onto an HTTP status.
struct CommandResult {
    int status = 204;
    wire::ErrorMsg error;

    bool ok() const { return status >= 200 && status < 300; }
    static CommandResult failure(int status, std::string code, std::string message,
                                 std::optional<int> joint = std::nullopt);
};

// Deterministic model of the controller and the stacking cell. Advanced by
// tick(); commands are applied between ticks. Single-threaded.
class Workcell {
  public:
    explicit Workcell(WorkcellConfig cfg);

    void tick();

    CommandResult execution(ExecutionAction action);
    CommandResult update_jog_target(const std::array<double, 6>& degrees);
    CommandResult set_io(std::string_view name, int value);

    const RapidExecutionState& execution_state() const { return exec_; }
    const WorkcellState& state() const { return cell_; }
    const kin::JointConfig& joints() const { return motion_.current(); }
    kin::Pose tcp() const { return kin::forward_kinematics(cfg_.dh, motion_.current()); }
    const MotionExecutor& motion() const { return motion_; }
    const WorkcellConfig& config() const { return cfg_; }

    // Effective signal values (manual overrides applied), fixed order.
    std::vector<wire::IoSignal> io() const;
    int io_value(std::string_view name) const;
    const std::set<std::string, std::less<>>& overridden() const { return overrides_; }

    std::uint64_t tick_count() const { return ticks_; }
    std::int64_t timestamp_ms() const;

    wire::SpyLogMsg spylog(std::uint64_t since) const;
    std::uint64_t last_spy_seq() const { return spy_seq_; }

    // Describes the first violated IO/phase coupling, or nullopt.
    std::optional<std::string> check_invariants() const;

  private:
    void enter(Phase next);
    void advance_program();
    void reset_cell();
    void log(wire::LogLevel level, std::string text);
    void set_script(std::string_view name, int value);
    kin::JointConfig place_target(Shape shape) const;
    std::uint64_t ticks_for(double seconds) const;

    WorkcellConfig cfg_;
    MotionExecutor motion_;
    RapidExecutionState exec_;
    WorkcellState cell_;
    Shape next_shape_ = Shape::Square;
    std::uint64_t ticks_ = 0;
    std::uint64_t phase_ticks_ = 0;

    struct Signal {
        std::string name;
        wire::SignalKind kind;
        bool cycle_owned;
        int script = 0;
    };
    std::vector<Signal> signals_;
    std::map<std::string, int, std::less<>> override_values_;
    std::set<std::string, std::less<>> overrides_;

    std::vector<wire::SpyEvent> spy_;
    std::uint64_t spy_seq_ = 0;
};

}  // namespace dtwin::emu
