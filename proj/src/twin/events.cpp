#include "dtwin/twin/events.hpp"

#include <array>

namespace dtwin::twin {

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::ShapeRecognized: return "ShapeRecognized";
        case EventKind::PieceAtB: return "PieceAtB";
        case EventKind::ConveyorStart: return "ConveyorStart";
        case EventKind::ConveyorStop: return "ConveyorStop";
        case EventKind::GripOn: return "GripOn";
        case EventKind::GripOff: return "GripOff";
        case EventKind::IntegrityWarning: return "IntegrityWarning";
    }
    return "?";
}

std::string_view to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "square";
        case ShapeKind::Rectangle: return "rectangle";
        case ShapeKind::Circle: return "circle";
    }
    return "?";
}

nlohmann::ordered_json to_json(const AbstractEvent& e) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(e.kind);
    if (e.shape) j["shape"] = to_string(*e.shape);
    j["timestamp_ms"] = e.timestamp_ms;
    j["source_signals"] = e.source_signals;
    if (!e.detail.empty()) j["detail"] = e.detail;
    return j;
}

namespace {

enum class Edge { None, Rise, Fall };

Edge edge(const wire::IoSnapshotMsg& prev, const wire::IoSnapshotMsg& next, std::string_view name) {
    const auto* a = prev.find(name);
    const auto* b = next.find(name);
    if (!a || !b || a->value == b->value) return Edge::None;
    return b->value ? Edge::Rise : Edge::Fall;
}

}  // namespace

std::vector<AbstractEvent> derive_events(const wire::IoSnapshotMsg& prev, const wire::IoSnapshotMsg& next) {
    std::vector<AbstractEvent> out;
    const auto ts = next.timestamp_ms;

    constexpr std::array<std::pair<std::string_view, ShapeKind>, 3> shapes = {{
        {"DO_3", ShapeKind::Square},
        {"DO_4", ShapeKind::Rectangle},
        {"DO_5", ShapeKind::Circle},
    }};
    std::vector<std::string> rising;
    std::optional<ShapeKind> shape;
    for (const auto& [name, kind] : shapes) {
        if (edge(prev, next, name) == Edge::Rise) {
            rising.emplace_back(name);
            shape = kind;
        }
    }
    if (rising.size() == 1) {
        out.push_back({EventKind::ShapeRecognized, shape, ts, rising, ""});
    } else if (rising.size() > 1) {
        out.push_back({EventKind::IntegrityWarning, std::nullopt, ts, rising, "several shape lights rose at once"});
    }

    if (edge(prev, next, "DI_IR") == Edge::Rise) out.push_back({EventKind::PieceAtB, std::nullopt, ts, {"DI_IR"}, ""});

    switch (edge(prev, next, "DO_CONVEYOR")) {
        case Edge::Rise: out.push_back({EventKind::ConveyorStart, std::nullopt, ts, {"DO_CONVEYOR"}, ""}); break;
        case Edge::Fall: out.push_back({EventKind::ConveyorStop, std::nullopt, ts, {"DO_CONVEYOR"}, ""}); break;
        case Edge::None: break;
    }
    switch (edge(prev, next, "DO_GRIP")) {
        case Edge::Rise: out.push_back({EventKind::GripOn, std::nullopt, ts, {"DO_GRIP"}, ""}); break;
        case Edge::Fall: out.push_back({EventKind::GripOff, std::nullopt, ts, {"DO_GRIP"}, ""}); break;
        case Edge::None: break;
    }
    return out;
}

}  // namespace dtwin::twin
