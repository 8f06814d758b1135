#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtwin::wire {

// Resource paths of the controller dialect.
namespace path {
inline constexpr std::string_view kJointTarget = "/rw/motionsystem/mechunits/ROB_1/jointtarget";
inline constexpr std::string_view kRobTarget = "/rw/motionsystem/mechunits/ROB_1/robtarget";
inline constexpr std::string_view kSignals = "/rw/iosystem/signals";
inline constexpr std::string_view kSpyLog = "/rw/rapid/spylog";
inline constexpr std::string_view kExecution = "/rw/rapid/execution";
inline constexpr std::string_view kJogSymbol = "/rw/rapid/symbol/data/T_ROB1/module/jtarget";
inline constexpr std::string_view kCameraSnapshot = "/rw/camera/snapshot.jpg";

std::string signal(std::string_view name);  // /rw/iosystem/signals/{name}
}  // namespace path

// Malformed payload. field() names the offending key ("" for syntax errors).
class ProtocolError : public std::runtime_error {
  public:
    ProtocolError(std::string field, const std::string& what)
        : std::runtime_error(what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

  private:
    std::string field_;
};

struct JointTargetMsg {
    std::array<double, 6> joints{};  // degrees
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    bool operator==(const JointTargetMsg&) const = default;
};

struct RobTargetMsg {
    double x = 0, y = 0, z = 0;                // mm
    double q1 = 1, q2 = 0, q3 = 0, q4 = 0;     // w, x, y, z
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    bool operator==(const RobTargetMsg&) const = default;
};

enum class SignalKind { DI, DO };

struct IoSignal {
    std::string name;
    SignalKind kind = SignalKind::DO;
    int value = 0;
    bool operator==(const IoSignal&) const = default;
};

struct IoSnapshotMsg {
    std::vector<IoSignal> signals;
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;

    const IoSignal* find(std::string_view name) const;
    // Value of `name`, or 0 when absent.
    int value(std::string_view name) const;
    bool operator==(const IoSnapshotMsg&) const = default;
};

enum class LogLevel { Info, Warn };

struct SpyEvent {
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    LogLevel level = LogLevel::Info;
    std::string text;
    bool operator==(const SpyEvent&) const = default;
};

struct SpyLogMsg {
    std::vector<SpyEvent> events;
    std::uint64_t next_since = 0;
    bool operator==(const SpyLogMsg&) const = default;
};

// Body of the jog symbol update: six joint values in degrees.
struct JogTargetMsg {
    std::array<double, 6> value{};
    bool operator==(const JogTargetMsg&) const = default;
};

// Error body returned by every non-2xx controller reply.
struct ErrorMsg {
    std::string code;     // "conflict", "busy", "limit", "not_found", ...
    std::string message;
    std::optional<int> joint;  // 1-based, for limit errors
    bool operator==(const ErrorMsg&) const = default;
};

std::string encode(const JointTargetMsg& m);
std::string encode(const RobTargetMsg& m);
std::string encode(const IoSnapshotMsg& m);
std::string encode(const SpyLogMsg& m);
std::string encode(const JogTargetMsg& m);
std::string encode(const ErrorMsg& m);

JointTargetMsg decode_joint_target(std::string_view body);
RobTargetMsg decode_rob_target(std::string_view body);
IoSnapshotMsg decode_io_snapshot(std::string_view body);
SpyLogMsg decode_spy_log(std::string_view body);
JogTargetMsg decode_jog_target(std::string_view body);
ErrorMsg decode_error(std::string_view body);

std::string_view to_string(SignalKind k);
std::string_view to_string(LogLevel l);

// Signals every controller snapshot carries.
inline constexpr std::array<std::string_view, 6> kMandatorySignals = {
    "DO_3", "DO_4", "DO_5", "DO_GRIP", "DI_IR", "DO_CONVEYOR"};

}  // namespace dtwin::wire
