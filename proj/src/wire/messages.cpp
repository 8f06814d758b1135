#include "dtwin/wire/messages.hpp"

#include <json.hpp>

#include <cmath>
#include <set>

namespace dtwin::wire {

using ojson = nlohmann::ordered_json;

std::string path::signal(std::string_view name) {
    return std::string(kSignals) + "/" + std::string(name);
}

const IoSignal* IoSnapshotMsg::find(std::string_view name) const {
    for (const auto& s : signals) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

int IoSnapshotMsg::value(std::string_view name) const {
    const IoSignal* s = find(name);
    return s ? s->value : 0;
}

std::string_view to_string(SignalKind k) { return k == SignalKind::DI ? "DI" : "DO"; }
std::string_view to_string(LogLevel l) { return l == LogLevel::Info ? "info" : "warn"; }

namespace {

ojson parse(std::string_view body) {
    try {
        return ojson::parse(body);
    } catch (const ojson::parse_error& e) {
        throw ProtocolError("", std::string("malformed JSON: ") + e.what());
    }
}

const ojson& field(const ojson& j, const char* name) {
    if (!j.is_object()) throw ProtocolError(name, "payload is not an object");
    auto it = j.find(name);
    if (it == j.end()) throw ProtocolError(name, std::string("missing field \"") + name + "\"");
    return *it;
}

double number(const ojson& j, const char* name) {
    const ojson& v = field(j, name);
    if (!v.is_number()) throw ProtocolError(name, std::string("field \"") + name + "\" must be a number");
    return v.get<double>();
}

std::uint64_t counter(const ojson& j, const char* name) {
    const ojson& v = field(j, name);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ProtocolError(name, std::string("field \"") + name + "\" must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::int64_t integer(const ojson& j, const char* name) {
    const ojson& v = field(j, name);
    if (!v.is_number_integer()) {
        throw ProtocolError(name, std::string("field \"") + name + "\" must be an integer");
    }
    return v.get<std::int64_t>();
}

std::string text(const ojson& j, const char* name) {
    const ojson& v = field(j, name);
    if (!v.is_string()) throw ProtocolError(name, std::string("field \"") + name + "\" must be a string");
    return v.get<std::string>();
}

std::array<double, 6> six(const ojson& j, const char* name) {
    const ojson& v = field(j, name);
    if (!v.is_array() || v.size() != 6) {
        throw ProtocolError(name, std::string("field \"") + name + "\" must hold 6 numbers");
    }
    std::array<double, 6> out{};
    for (std::size_t i = 0; i < 6; ++i) {
        if (!v[i].is_number()) throw ProtocolError(name, std::string("field \"") + name + "\" must hold 6 numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

std::string dump(const ojson& j) { return j.dump(); }

}  // namespace

std::string encode(const JointTargetMsg& m) {
    ojson j;
    j["joints"] = m.joints;
    j["seq"] = m.seq;
    j["timestamp_ms"] = m.timestamp_ms;
    return dump(j);
}

std::string encode(const RobTargetMsg& m) {
    ojson j;
    j["pos"] = {{"x", m.x}, {"y", m.y}, {"z", m.z}};
    j["orient"] = {{"q1", m.q1}, {"q2", m.q2}, {"q3", m.q3}, {"q4", m.q4}};
    j["seq"] = m.seq;
    j["timestamp_ms"] = m.timestamp_ms;
    return dump(j);
}

std::string encode(const IoSnapshotMsg& m) {
    ojson sigs = ojson::array();
    for (const auto& s : m.signals) {
        sigs.push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"value", s.value}});
    }
    ojson j;
    j["signals"] = std::move(sigs);
    j["seq"] = m.seq;
    j["timestamp_ms"] = m.timestamp_ms;
    return dump(j);
}

std::string encode(const SpyLogMsg& m) {
    ojson evs = ojson::array();
    for (const auto& e : m.events) {
        evs.push_back({{"seq", e.seq},
                       {"timestamp_ms", e.timestamp_ms},
                       {"level", to_string(e.level)},
                       {"text", e.text}});
    }
    ojson j;
    j["events"] = std::move(evs);
    j["next_since"] = m.next_since;
    return dump(j);
}

std::string encode(const JogTargetMsg& m) {
    ojson j;
    j["value"] = m.value;
    return dump(j);
}

std::string encode(const ErrorMsg& m) {
    ojson j;
    j["error"] = m.code;
    j["message"] = m.message;
    if (m.joint) j["joint"] = *m.joint;
    return dump(j);
}

JointTargetMsg decode_joint_target(std::string_view body) {
    const ojson j = parse(body);
    JointTargetMsg m;
    m.joints = six(j, "joints");
    m.seq = counter(j, "seq");
    m.timestamp_ms = integer(j, "timestamp_ms");
    return m;
}

RobTargetMsg decode_rob_target(std::string_view body) {
    const ojson j = parse(body);
    RobTargetMsg m;
    const ojson& pos = field(j, "pos");
    m.x = number(pos, "x");
    m.y = number(pos, "y");
    m.z = number(pos, "z");
    const ojson& o = field(j, "orient");
    m.q1 = number(o, "q1");
    m.q2 = number(o, "q2");
    m.q3 = number(o, "q3");
    m.q4 = number(o, "q4");
    const double n = std::sqrt(m.q1 * m.q1 + m.q2 * m.q2 + m.q3 * m.q3 + m.q4 * m.q4);
    if (std::abs(n - 1.0) > 1e-6) throw ProtocolError("orient", "orientation quaternion is not unit-norm");
    m.seq = counter(j, "seq");
    m.timestamp_ms = integer(j, "timestamp_ms");
    return m;
}

IoSnapshotMsg decode_io_snapshot(std::string_view body) {
    const ojson j = parse(body);
    IoSnapshotMsg m;
    const ojson& sigs = field(j, "signals");
    if (!sigs.is_array()) throw ProtocolError("signals", "field \"signals\" must be an array");
    std::set<std::string> seen;
    for (const auto& s : sigs) {
        IoSignal sig;
        sig.name = text(s, "name");
        const std::string kind = text(s, "kind");
        if (kind == "DI") {
            sig.kind = SignalKind::DI;
        } else if (kind == "DO") {
            sig.kind = SignalKind::DO;
        } else {
            throw ProtocolError("kind", "signal kind must be DI or DO");
        }
        const std::int64_t v = integer(s, "value");
        if (v != 0 && v != 1) throw ProtocolError("value", "signal value must be 0 or 1");
        sig.value = static_cast<int>(v);
        if (!seen.insert(sig.name).second) throw ProtocolError("name", "duplicate signal " + sig.name);
        m.signals.push_back(std::move(sig));
    }
    m.seq = counter(j, "seq");
    m.timestamp_ms = integer(j, "timestamp_ms");
    return m;
}

SpyLogMsg decode_spy_log(std::string_view body) {
    const ojson j = parse(body);
    SpyLogMsg m;
    const ojson& evs = field(j, "events");
    if (!evs.is_array()) throw ProtocolError("events", "field \"events\" must be an array");
    for (const auto& e : evs) {
        SpyEvent ev;
        ev.seq = counter(e, "seq");
        ev.timestamp_ms = integer(e, "timestamp_ms");
        const std::string level = text(e, "level");
        if (level == "info") {
            ev.level = LogLevel::Info;
        } else if (level == "warn") {
            ev.level = LogLevel::Warn;
        } else {
            throw ProtocolError("level", "log level must be info or warn");
        }
        ev.text = text(e, "text");
        if (!m.events.empty() && ev.seq <= m.events.back().seq) {
            throw ProtocolError("seq", "spy log events out of order");
        }
        m.events.push_back(std::move(ev));
    }
    m.next_since = counter(j, "next_since");
    return m;
}

JogTargetMsg decode_jog_target(std::string_view body) {
    const ojson j = parse(body);
    JogTargetMsg m;
    m.value = six(j, "value");
    return m;
}

ErrorMsg decode_error(std::string_view body) {
    const ojson j = parse(body);
    ErrorMsg m;
    m.code = text(j, "error");
    m.message = text(j, "message");
    if (j.contains("joint")) m.joint = static_cast<int>(integer(j, "joint"));
    return m;
}

}  // namespace dtwin::wire
