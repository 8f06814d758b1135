#pragma once

#include "dtwin/wire/messages.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtwin::twin {

enum class EventKind {
    ShapeRecognized,
    PieceAtB,
    ConveyorStart,
    ConveyorStop,
    GripOn,
    GripOff,
    IntegrityWarning,
};

enum class ShapeKind { Square, Rectangle, Circle };

std::string_view to_string(EventKind k);
std::string_view to_string(ShapeKind s);

struct AbstractEvent {
    EventKind kind = EventKind::PieceAtB;
    std::optional<ShapeKind> shape;  // ShapeRecognized only
    std::int64_t timestamp_ms = 0;
    std::vector<std::string> source_signals;
    std::string detail;

    bool operator==(const AbstractEvent&) const = default;
};

nlohmann::ordered_json to_json(const AbstractEvent& e);

// Edge detection between consecutive IO snapshots. Events come out in a fixed
// order: shape, piece at B, conveyor, grip. Signals missing from either
// snapshot produce no edge.
std::vector<AbstractEvent> derive_events(const wire::IoSnapshotMsg& prev, const wire::IoSnapshotMsg& next);

}  // namespace dtwin::twin
