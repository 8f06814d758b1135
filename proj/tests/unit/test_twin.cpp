#include <doctest.h>

#include "dtwin/emulator/service.hpp"
#include "dtwin/twin/twin.hpp"

#include <map>
#include <sstream>

using namespace dtwin;
using namespace dtwin::twin;
using namespace std::chrono_literals;

namespace {

wire::IoSnapshotMsg io_of(const std::map<std::string, int>& values, std::int64_t ts = 0) {
    wire::IoSnapshotMsg m;
    for (const auto& [name, v] : values) {
        m.signals.push_back({name, name.rfind("DI", 0) == 0 ? wire::SignalKind::DI : wire::SignalKind::DO, v});
    }
    m.timestamp_ms = ts;
    return m;
}

const std::vector<std::string> kSix = {"DO_3", "DO_4", "DO_5", "DI_IR", "DO_CONVEYOR", "DO_GRIP"};

// Independent reading of the mapping table: (signal, edge) -> event name,
// listed in the documented output order.
std::vector<std::string> table_events(const std::map<std::string, int>& a, const std::map<std::string, int>& b) {
    auto rose = [&](const std::string& s) { return a.at(s) == 0 && b.at(s) == 1; };
    auto fell = [&](const std::string& s) { return a.at(s) == 1 && b.at(s) == 0; };
    std::vector<std::string> out;
    const int shapes = rose("DO_3") + rose("DO_4") + rose("DO_5");
    if (shapes == 1) {
        out.push_back(rose("DO_3") ? "ShapeRecognized:square"
                      : rose("DO_4") ? "ShapeRecognized:rectangle"
                                     : "ShapeRecognized:circle");
    }
    if (shapes > 1) out.emplace_back("IntegrityWarning");
    if (rose("DI_IR")) out.emplace_back("PieceAtB");
    if (rose("DO_CONVEYOR")) out.emplace_back("ConveyorStart");
    if (fell("DO_CONVEYOR")) out.emplace_back("ConveyorStop");
    if (rose("DO_GRIP")) out.emplace_back("GripOn");
    if (fell("DO_GRIP")) out.emplace_back("GripOff");
    return out;
}

std::vector<std::string> names(const std::vector<AbstractEvent>& evs) {
    std::vector<std::string> out;
    for (const auto& e : evs) {
        std::string n(to_string(e.kind));
        if (e.shape) n += ":" + std::string(to_string(*e.shape));
        out.push_back(n);
    }
    return out;
}

emu::EmulatorConfig fast_emulator() {
    emu::EmulatorConfig cfg;
    cfg.workcell.timings = {0.1, 0.2, 0.3, 0.05};
    cfg.seed = 11;
    return cfg;
}

TwinOptions twin_options(const emu::Emulator& e) {
    TwinOptions o;
    o.controller_url = e.url();
    o.credentials = e.config().credentials;
    return o;
}

}  // namespace

TEST_CASE("derive_events examples") {
    const auto base = io_of({{"DO_3", 0}, {"DO_4", 0}, {"DO_5", 0}, {"DI_IR", 0}, {"DO_CONVEYOR", 1}, {"DO_GRIP", 0}});

    auto next = io_of({{"DO_3", 0}, {"DO_4", 1}, {"DO_5", 0}, {"DI_IR", 0}, {"DO_CONVEYOR", 1}, {"DO_GRIP", 0}}, 42);
    const auto evs = derive_events(base, next);
    REQUIRE(evs.size() == 1);
    CHECK(evs[0].kind == EventKind::ShapeRecognized);
    CHECK(evs[0].shape == ShapeKind::Rectangle);
    CHECK(evs[0].timestamp_ms == 42);
    CHECK(evs[0].source_signals == std::vector<std::string>{"DO_4"});

    CHECK(derive_events(base, base).empty());

    next = io_of({{"DO_3", 0}, {"DO_4", 0}, {"DO_5", 0}, {"DI_IR", 1}, {"DO_CONVEYOR", 0}, {"DO_GRIP", 0}});
    CHECK(names(derive_events(base, next)) == std::vector<std::string>{"PieceAtB", "ConveyorStop"});

    next = io_of({{"DO_3", 1}, {"DO_4", 0}, {"DO_5", 1}, {"DI_IR", 0}, {"DO_CONVEYOR", 1}, {"DO_GRIP", 0}});
    const auto bad = derive_events(base, next);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].kind == EventKind::IntegrityWarning);
    CHECK(bad[0].source_signals == std::vector<std::string>{"DO_3", "DO_5"});

    // falling shape light and missing signals produce nothing
    CHECK(derive_events(io_of({{"DO_3", 1}}), io_of({{"DO_3", 0}})).empty());
    CHECK(derive_events(io_of({{"DO_3", 0}}), io_of({{"DO_4", 1}})).empty());

    const auto j = to_json(evs[0]);
    CHECK(j.dump() == R"({"kind":"ShapeRecognized","shape":"rectangle","timestamp_ms":42,"source_signals":["DO_4"]})");
}

TEST_CASE("derive_events matches the mapping table on every transition") {
    for (int a = 0; a < 64; ++a) {
        for (int b = 0; b < 64; ++b) {
            std::map<std::string, int> va, vb;
            for (std::size_t i = 0; i < kSix.size(); ++i) {
                va[kSix[i]] = (a >> i) & 1;
                vb[kSix[i]] = (b >> i) & 1;
            }
            const auto got = derive_events(io_of(va), io_of(vb));
            REQUIRE(names(got) == table_events(va, vb));
            REQUIRE(derive_events(io_of(va), io_of(vb)) == got);
        }
    }
}

TEST_CASE("refresh meter windows") {
    const auto t0 = SteadyClock::now();
    RefreshMeter m(120, 0.5, t0);
    m.connected(t0);
    for (int i = 0; i < 40; ++i) m.record(t0 + 25ms * i);
    m.roll(t0 + 1s);
    auto w = m.last();
    REQUIRE(w);
    CHECK(w->window_count == 40);
    CHECK(w->period_ms == doctest::Approx(25.0));
    CHECK(w->max_period_ms == doctest::Approx(25.0));
    CHECK(w->warm_up);

    // second window: 20 samples with one 200 ms stall
    for (int i = 0; i < 20; ++i) m.record(t0 + 1s + 200ms + 40ms * i);
    m.roll(t0 + 2s);
    w = m.last();
    CHECK(w->window_count == 20);
    CHECK(w->period_ms == doctest::Approx(50.0));
    CHECK(w->max_period_ms == doctest::Approx(225.0));
    CHECK(w->ewma_period_ms == doctest::Approx(37.5));
    CHECK_FALSE(w->warm_up);
    CHECK(w->period_ms * w->window_count == doctest::Approx(1000.0));

    // empty window is skipped; reconnect flags warm-up and drops the outage gap
    m.connected(t0 + 3s + 500ms);
    m.record(t0 + 3s + 600ms);
    m.record(t0 + 3s + 700ms);
    m.roll(t0 + 4s);
    const auto all = m.windows();
    REQUIRE(all.size() == 3);
    CHECK(all[2].index == 3);
    CHECK(all[2].warm_up);
    CHECK(all[2].max_period_ms == doctest::Approx(100.0));
    CHECK(all[2].end_ms - all[2].start_ms == 1000);

    RefreshMeter small(5, 0.2, t0);
    for (int i = 0; i < 50; ++i) small.record(t0 + 100ms * i);
    small.roll(t0 + 10s);
    CHECK(small.windows().size() == 5);
    CHECK(small.total() == 50);
}

TEST_CASE("trajectory csv") {
    TrajectoryRecorder r(kin::DhTable::irb120());
    r.on_joints(1, 5, {});
    CHECK(r.rows().empty());
    r.start();
    r.on_joints(2, 10, {});
    r.on_tcp(2, 10, kin::forward_kinematics(kin::DhTable::irb120(), {}));
    r.stop();
    r.on_joints(3, 14, {});
    REQUIRE(r.rows().size() == 1);
    REQUIRE(r.tcp_rows().size() == 1);
    std::ostringstream os;
    r.write_csv(os);
    std::istringstream in(os.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "t_ms,j1,j2,j3,j4,j5,j6,x,y,z,qw,qx,qy,qz");
    std::vector<double> v;
    std::istringstream cells(row);
    for (std::string c; std::getline(cells, c, ',');) v.push_back(std::stod(c));
    const std::vector<double> want = {10, 0, 0, 0, 0, 0, 0, 374, 0, 630, 0, std::sqrt(0.5), 0, std::sqrt(0.5)};
    REQUIRE(v.size() == want.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - want[i]) < 1e-9);
}

TEST_CASE("twin follows an emulated controller") {
    emu::Emulator e(fast_emulator());
    e.start();
    Twin t(twin_options(e));
    t.recorder().start();
    t.start();
    REQUIRE(t.wait_until([](const TwinState& s) { return s.connection == ConnectionState::Up && s.joints && s.tcp && s.io; },
                         3s));

    SUBCASE("state is consistent") {
        const auto s = t.state();
        CHECK(s.joints->q == kin::JointConfig{});
        CHECK((s.tcp->pose.position - kin::Vector3d(374, 0, 630)).norm() < 1e-9);
        CHECK(age_ms(s.joints->received) < 1000);
        for (auto name : wire::kMandatorySignals) CHECK(s.io->msg.find(name) != nullptr);
        CHECK(s.connection == ConnectionState::Up);
    }

    SUBCASE("stationary robot records identical rows") {
        std::this_thread::sleep_for(1s);
        const auto rows = t.recorder().rows();
        REQUIRE(rows.size() > 10);
        for (const auto& r : rows) CHECK(r.q == rows.front().q);
    }

    SUBCASE("joint 1 jog traces an arc") {
        t.recorder().clear();
        REQUIRE(e.update_jog_target({10, 0, 0, 0, 0, 0}).ok());
        REQUIRE(t.wait_until(
            [](const TwinState& s) { return std::abs(s.joints->q.degrees()[0] - 10) < 0.05; }, 2s));
        const auto rows = t.recorder().rows();
        REQUIRE(rows.size() > 3);
        const auto end = kin::forward_kinematics(kin::DhTable::irb120(),
                                                 kin::JointConfig::from_degrees(std::array<double, 6>{10, 0, 0, 0, 0, 0}));
        CHECK(end.position.x() == doctest::Approx(374 * std::cos(kin::deg2rad(10))));
        CHECK(end.position.y() == doctest::Approx(374 * std::sin(kin::deg2rad(10))));
        for (const auto& r : rows) {
            CHECK(std::hypot(r.pose.position.x(), r.pose.position.y()) == doctest::Approx(374).epsilon(1e-12));
            CHECK(r.pose.position.z() == doctest::Approx(630).epsilon(1e-12));
        }
    }

    SUBCASE("a cycle produces the event sequence and phases") {
        REQUIRE(e.execution(emu::ExecutionAction::Start).ok());
        REQUIRE(t.wait_until([](const TwinState& s) { return s.events_total >= 6; }, 20s));
        const auto s = t.state();
        std::vector<std::string> got = names({s.events->begin(), s.events->end()});
        got.resize(6);
        CHECK(got == std::vector<std::string>{"ShapeRecognized:square", "ConveyorStart", "PieceAtB", "ConveyorStop",
                                              "GripOn", "GripOff"});
        t.wait_until([](const TwinState& st) { return st.phase.has_value(); }, 1s);
        CHECK(t.state().phase.has_value());

        // tcp and FK(joints) agree wherever the two streams sampled the same tick
        std::map<std::int64_t, kin::Pose> fk;
        for (const auto& r : t.recorder().rows()) fk[r.t_ms] = r.pose;
        int matched = 0;
        for (const auto& r : t.recorder().tcp_rows()) {
            auto it = fk.find(r.t_ms);
            if (it == fk.end()) continue;
            ++matched;
            CHECK((it->second.position - r.pose.position).norm() <= 0.1);
        }
        CHECK(matched > 10);
    }

    SUBCASE("seq is monotone per stream") {
        std::uint64_t last_j = 0, last_t = 0, last_io = 0;
        for (int i = 0; i < 200; ++i) {
            const auto s = t.state();
            CHECK(s.joints->seq >= last_j);
            CHECK(s.tcp->seq >= last_t);
            CHECK(s.io->msg.seq >= last_io);
            last_j = s.joints->seq;
            last_t = s.tcp->seq;
            last_io = s.io->msg.seq;
            std::this_thread::sleep_for(1ms);
        }
    }

    SUBCASE("controller outage goes down and recovers") {
        const int port = e.port();
        e.stop();
        CHECK(t.wait_until([](const TwinState& s) { return s.connection == ConnectionState::Down; }, 2s));
        CHECK_FALSE(t.state().reason.empty());
        auto cfg = fast_emulator();
        cfg.port = port;
        emu::Emulator again(cfg);
        again.start();
        CHECK(t.wait_until([](const TwinState& s) { return s.connection == ConnectionState::Up; }, 5s));
        again.stop();
    }

    t.stop();
    e.stop();
}

TEST_CASE("rejected credentials bring the twin down with a reason") {
    emu::Emulator e(fast_emulator());
    e.start();
    auto opts = twin_options(e);
    opts.credentials.password = "wrong";
    Twin t(opts);
    t.start();
    CHECK(t.wait_until(
        [](const TwinState& s) { return s.connection == ConnectionState::Down && s.reason.find("authentication") != std::string::npos; },
        3s));
    t.stop();
}

TEST_CASE("refresh stats from a live twin") {
    emu::Emulator e(fast_emulator());
    e.start();
    Twin t(twin_options(e));
    t.start();
    std::this_thread::sleep_for(2500ms);
    t.roll_meters();
    for (Stream s : {Stream::Joints, Stream::Tcp, Stream::Io}) {
        const auto w = t.meter(s).windows();
        REQUIRE(w.size() >= 2);
        CHECK(w.front().warm_up);
        for (const auto& x : w) {
            CHECK(x.window_count > 0);
            CHECK(std::abs(x.period_ms * x.window_count - 1000.0) <= 1.0);
            CHECK(x.max_period_ms > 0);
            CHECK(x.ewma_period_ms > 0);
        }
    }
    std::ostringstream os;
    t.write_stats_jsonl(os);
    std::istringstream lines(os.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("period_ms"));
        ++n;
    }
    CHECK(n >= 6);
    t.stop();
    e.stop();
}
