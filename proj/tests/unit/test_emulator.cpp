#include <doctest.h>

#include "dtwin/emulator/service.hpp"
#include "dtwin/emulator/phase_image.hpp"
#include "dtwin/wire/rws_client.hpp"

#include <httplib.h>

#include <chrono>
#include <random>

using namespace dtwin;
using namespace dtwin::emu;

namespace {

std::uint64_t run_until(Workcell& w, Phase p, std::uint64_t max_ticks = 250 * 60) {
    for (std::uint64_t i = 0; i < max_ticks; ++i) {
        if (w.execution_state().phase == p) return i;
        w.tick();
        REQUIRE_MESSAGE(!w.check_invariants(), *w.check_invariants());
    }
    FAIL("phase never reached: " << to_string(p));
    return max_ticks;
}

std::array<double, 6> zeros() { return {0, 0, 0, 0, 0, 0}; }

}  // namespace

TEST_CASE("motion executor moves synchronously at the speed limit") {
    const auto dh = kin::DhTable::irb120();
    MotionExecutor m(dh, 250.0);
    CHECK(m.max_step()[0] == doctest::Approx(kin::deg2rad(1.0)));
    CHECK(m.max_step()[5] == doctest::Approx(kin::deg2rad(420.0 / 250.0)));

    const auto target = kin::JointConfig::from_degrees(std::array<double, 6>{10, 0, 0, 0, 5, 0});
    CHECK(m.travel_time(m.current(), target) == doctest::Approx(0.04));
    m.enqueue(target, MotionSource::Jog);
    int ticks = 0;
    kin::JointConfig prev = m.current();
    while (!m.idle() && ticks < 100) {
        m.tick(false);
        ++ticks;
        const kin::Vec6 d = (m.current().q - prev.q).cwiseAbs();
        for (int i = 0; i < 6; ++i) CHECK(d[i] <= m.max_step()[i] * (1 + 1e-9));
        // both joints arrive together: the ratio of progress stays 2:1
        CHECK(m.current().q[0] == doctest::Approx(2 * m.current().q[4]));
        prev = m.current();
    }
    CHECK(ticks == 10);
    CHECK(m.current() == target);

    CHECK_THROWS_AS(m.enqueue(kin::JointConfig::from_degrees(std::array<double, 6>{200, 0, 0, 0, 0, 0}),
                              MotionSource::Jog),
                    std::invalid_argument);
}

TEST_CASE("program motion only runs when enabled and yields to jog") {
    MotionExecutor m(kin::DhTable::irb120(), 250.0);
    const auto a = kin::JointConfig::from_degrees(std::array<double, 6>{0, 0, 0, 0, 30, 0});
    m.enqueue(a, MotionSource::Program);
    m.tick(false);
    CHECK(m.current() == kin::JointConfig{});
    m.tick(true);
    CHECK(m.current().q[4] > 0);
    m.clear(MotionSource::Program);
    CHECK(m.idle());
}

TEST_CASE("workcell completes a stacking cycle") {
    Workcell w({});
    CHECK(w.execution_state().phase == Phase::Idle);
    CHECK(w.execution(ExecutionAction::Start).ok());
    CHECK(w.execution_state().phase == Phase::Spawn);

    run_until(w, Phase::Recognize);
    CHECK(w.state().camera_busy);
    run_until(w, Phase::Convey);
    CHECK(w.io_value("DO_3") == 1);  // first piece is a square
    CHECK(w.io_value("DO_CONVEYOR") == 1);
    CHECK_FALSE(w.state().camera_busy);
    run_until(w, Phase::AtB);
    CHECK(w.io_value("DI_IR") == 1);
    CHECK(w.io_value("DO_CONVEYOR") == 0);
    run_until(w, Phase::Place);
    CHECK(w.io_value("DO_GRIP") == 1);
    CHECK(w.io_value("DI_IR") == 0);
    run_until(w, Phase::Return);
    CHECK(w.state().pallet[0] == 1);
    CHECK(w.io_value("DO_GRIP") == 0);
    CHECK(w.io_value("DO_3") == 0);
    run_until(w, Phase::Spawn);
    CHECK(w.execution_state().cycle_count == 1);
    CHECK(w.joints() == w.config().waypoints.home);

    // three more cycles cover every shape and stack a second square
    for (int c = 0; c < 3; ++c) {
        run_until(w, Phase::Return);
        run_until(w, Phase::Spawn);
    }
    CHECK(w.state().pallet == std::array<int, 3>{2, 1, 1});
}

TEST_CASE("second stack level sits one piece higher") {
    Workcell w({});
    w.execution(ExecutionAction::Start);
    std::vector<kin::Vector3d> drops;
    for (int c = 0; c < 4; ++c) {
        run_until(w, Phase::Place);
        run_until(w, Phase::Return);
        drops.push_back(w.tcp().position);
        run_until(w, Phase::Spawn);
    }
    const kin::Vector3d lift = drops[3] - drops[0];
    CHECK(std::abs(lift.x()) < 0.01);
    CHECK(std::abs(lift.y()) < 0.01);
    CHECK(lift.z() == doctest::Approx(w.config().waypoints.piece_height_mm).epsilon(1e-4));
}

TEST_CASE("execution commands") {
    Workcell w({});
    CHECK(w.execution(ExecutionAction::Start).ok());
    const auto again = w.execution(ExecutionAction::Start);
    CHECK(again.status == 409);
    CHECK(again.error.code == "conflict");

    run_until(w, Phase::Convey);
    for (int i = 0; i < 50; ++i) w.tick();
    CHECK(w.execution(ExecutionAction::Stop).ok());
    const double frozen = w.state().piece->conveyor_progress;
    for (int i = 0; i < 500; ++i) w.tick();
    CHECK(w.execution_state().phase == Phase::Convey);
    CHECK(w.state().piece->conveyor_progress == frozen);
    CHECK(w.execution_state().resumable);

    CHECK(w.execution(ExecutionAction::Start).ok());
    w.tick();
    CHECK(w.state().piece->conveyor_progress > frozen);

    CHECK(w.execution(ExecutionAction::ResetPP).ok());
    CHECK(w.execution_state().phase == Phase::Idle);
    CHECK(w.execution_state().pointer_at_main);
    CHECK_FALSE(w.state().piece.has_value());
    CHECK(w.io_value("DO_CONVEYOR") == 0);
    CHECK_FALSE(w.check_invariants());

    CHECK(parse_action("resetpp") == ExecutionAction::ResetPP);
    CHECK_FALSE(parse_action("pause"));
}

TEST_CASE("jog targets") {
    Workcell w({});
    SUBCASE("ten degree jog settles in 40 ms plus a tick") {
        CHECK(w.update_jog_target({10, 0, 0, 0, 0, 0}).ok());
        int ticks = 0;
        double prev = 0;
        while (std::abs(w.joints().degrees()[0] - 10) > 1e-9 && ticks < 100) {
            w.tick();
            ++ticks;
            CHECK(w.joints().degrees()[0] - prev <= 1.0 + 1e-9);
            prev = w.joints().degrees()[0];
        }
        CHECK(ticks * 4 <= 40 + 4);
    }
    SUBCASE("out of limits names the joint") {
        const auto r = w.update_jog_target({200, 0, 0, 0, 0, 0});
        CHECK(r.status == 400);
        CHECK(r.error.code == "limit");
        REQUIRE(r.error.joint);
        CHECK(*r.error.joint == 1);
        CHECK(r.error.message.find("joint 1") != std::string::npos);
        const auto r3 = w.update_jog_target({0, 0, 80, 0, 0, 0});
        CHECK(*r3.error.joint == 3);
        w.tick();
        CHECK(w.joints() == kin::JointConfig{});
    }
    SUBCASE("non-finite") {
        CHECK(w.update_jog_target({0, std::nan(""), 0, 0, 0, 0}).status == 400);
    }
    SUBCASE("busy while the program runs") {
        w.execution(ExecutionAction::Start);
        CHECK(w.update_jog_target(zeros()).status == 409);
        w.execution(ExecutionAction::Stop);
        CHECK(w.update_jog_target(zeros()).ok());
    }
}

TEST_CASE("io writes") {
    Workcell w({});
    CHECK(w.set_io("DO_7", 1).ok());
    CHECK(w.io_value("DO_7") == 1);
    CHECK(w.set_io("DI_IR", 1).status == 403);
    CHECK(w.set_io("DI_1", 1).status == 403);
    CHECK(w.set_io("DO_99", 1).status == 404);
    CHECK(w.set_io("DO_7", 2).status == 400);

    w.execution(ExecutionAction::Start);
    run_until(w, Phase::Convey);
    CHECK(w.set_io("DO_CONVEYOR", 0).ok());
    CHECK(w.io_value("DO_CONVEYOR") == 0);
    const double p = w.state().piece->conveyor_progress;
    for (int i = 0; i < 100; ++i) w.tick();
    CHECK(w.state().piece->conveyor_progress == p);
    CHECK_FALSE(w.check_invariants());
    w.set_io("DO_CONVEYOR", 1);
    run_until(w, Phase::AtB);
    CHECK(w.overridden().empty());

    const auto io = w.io();
    for (auto name : wire::kMandatorySignals) {
        CHECK(std::any_of(io.begin(), io.end(), [&](const wire::IoSignal& s) { return s.name == name; }));
    }
}

TEST_CASE("spy log paging") {
    Workcell w({});
    w.execution(ExecutionAction::Start);
    run_until(w, Phase::Convey);
    const auto all = w.spylog(0);
    REQUIRE(all.events.size() >= 4);
    CHECK(all.next_since == all.events.back().seq);
    for (std::size_t i = 1; i < all.events.size(); ++i) CHECK(all.events[i].seq == all.events[i - 1].seq + 1);
    const auto tail = w.spylog(all.events[1].seq);
    CHECK(tail.events.size() == all.events.size() - 2);
    const auto none = w.spylog(all.next_since);
    CHECK(none.events.empty());
    CHECK(none.next_since == all.next_since);
    bool recognized = false;
    for (const auto& e : all.events) recognized |= e.text.rfind("CAMERA recognized", 0) == 0;
    CHECK(recognized);
}

TEST_CASE("random command sequences keep the cell consistent") {
    std::mt19937_64 rng(7);
    const std::vector<std::string> outs = {"DO_3", "DO_4", "DO_5", "DO_GRIP", "DO_CONVEYOR", "DO_7", "DI_IR"};
    for (int run = 0; run < 200; ++run) {
        WorkcellConfig cfg;
        cfg.timings = {0.05, 0.1, 0.2, 0.02};
        Workcell w(cfg);
        for (int step = 0; step < 60; ++step) {
            switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
                case 0: w.execution(ExecutionAction::Start); break;
                case 1: w.execution(ExecutionAction::Stop); break;
                case 2: w.execution(ExecutionAction::ResetPP); break;
                case 3: {
                    std::array<double, 6> t{};
                    for (auto& v : t) v = std::uniform_real_distribution<double>(-60, 60)(rng);
                    w.update_jog_target(t);
                    break;
                }
                case 4:
                    w.set_io(outs[std::uniform_int_distribution<std::size_t>(0, outs.size() - 1)(rng)],
                             std::uniform_int_distribution<int>(0, 1)(rng));
                    break;
                default: break;
            }
            const int ticks = std::uniform_int_distribution<int>(0, 80)(rng);
            for (int t = 0; t < ticks; ++t) {
                w.tick();
                const auto bad = w.check_invariants();
                REQUIRE_MESSAGE(!bad, "run " << run << " step " << step << ": " << *bad);
            }
        }
    }
}

TEST_CASE("camera placeholder is a jpeg") {
    const auto img = render_text_jpeg({"PHASE RECOGNIZE"});
    REQUIRE(img.size() > 100);
    CHECK(img[0] == 0xFF);
    CHECK(img[1] == 0xD8);
    CHECK(img[img.size() - 2] == 0xFF);
    CHECK(img[img.size() - 1] == 0xD9);
}

TEST_CASE("config file keys") {
    const auto j = nlohmann::json::parse(R"({
        "tick_hz": 100, "camera_delay_ms": 150,
        "timings": {"recognize_s": 0.5},
        "credentials": {"password": "secret"}
    })");
    const auto cfg = emulator_config_from_json(j);
    CHECK(cfg.workcell.tick_hz == 100);
    CHECK(cfg.camera_delay_ms == 150);
    CHECK(cfg.workcell.timings.recognize_s == 0.5);
    CHECK(cfg.workcell.timings.spawn_s == 0.5);
    CHECK(cfg.credentials.password == "secret");
    CHECK(cfg.credentials.username == "Default User");
}

TEST_CASE("emulator service") {
    EmulatorConfig cfg;
    cfg.seed = 3;
    Emulator emu(cfg);
    const int port = emu.start();
    REQUIRE(port > 0);

    SUBCASE("requests need digest auth") {
        httplib::Client raw("127.0.0.1", port);
        auto res = raw.Get(std::string(wire::path::kJointTarget));
        REQUIRE(res);
        CHECK(res->status == 401);
        const auto ch = wire::parse_challenge(res->get_header_value("WWW-Authenticate"));
        REQUIRE(ch);
        CHECK(ch->realm == cfg.credentials.realm);

        wire::DigestCredentials wrong = cfg.credentials;
        wrong.password = "nope";
        wire::RwsClient bad(emu.url(), wrong);
        CHECK_THROWS_AS(bad.get(wire::path::kJointTarget), wire::AuthError);
    }

    SUBCASE("reads are sequenced and timestamped") {
        wire::RwsClient c(emu.url(), cfg.credentials);
        const auto a = wire::decode_joint_target(c.get(wire::path::kJointTarget).body);
        emu.wait_ticks(2);
        const auto b = wire::decode_joint_target(c.get(wire::path::kJointTarget).body);
        CHECK(b.seq == a.seq + 1);
        CHECK(b.timestamp_ms > a.timestamp_ms);
        const auto r = wire::decode_rob_target(c.get(wire::path::kRobTarget).body);
        CHECK(r.x == doctest::Approx(374));
        CHECK(r.z == doctest::Approx(630));
        const auto io = wire::decode_io_snapshot(c.get(wire::path::kSignals).body);
        CHECK(io.value("DO_GRIP") == 0);
        const auto spy = wire::decode_spy_log(c.get(std::string(wire::path::kSpyLog) + "?since=0").body);
        CHECK_FALSE(spy.events.empty());
        const auto img = c.get(wire::path::kCameraSnapshot);
        CHECK(img.content_type == "image/jpeg");
        CHECK(c.get("/rw/nothing").status == 404);
    }

    SUBCASE("control endpoints") {
        wire::RwsClient c(emu.url(), cfg.credentials);
        CHECK(c.post(std::string(wire::path::kJogSymbol) + "?action=set",
                     wire::encode(wire::JogTargetMsg{{10, 0, 0, 0, 0, 0}}))
                  .status == 204);
        const auto lim = c.post(std::string(wire::path::kJogSymbol) + "?action=set",
                                wire::encode(wire::JogTargetMsg{{200, 0, 0, 0, 0, 0}}));
        CHECK(lim.status == 400);
        CHECK(wire::decode_error(lim.body).joint == 1);
        CHECK(c.post(std::string(wire::path::kJogSymbol) + "?action=set", "{\"value\":[1,2]}").status == 400);
        CHECK(c.post("/rw/iosystem/signals/DO_7?action=set", "{\"value\":1}").status == 204);
        CHECK(c.post("/rw/iosystem/signals/DI_IR?action=set", "{\"value\":1}").status == 403);
        CHECK(c.post(std::string(wire::path::kExecution) + "?action=start", "").status == 204);
        CHECK(c.post(std::string(wire::path::kExecution) + "?action=start", "").status == 409);
        CHECK(c.post(std::string(wire::path::kExecution) + "?action=jump", "").status == 400);
        emu.wait_ticks(5);
        const auto s = emu.snapshot();
        CHECK(s->exec.running);
        CHECK(std::abs(s->joints.degrees()[0] - 10) < 1e-9);
    }

    SUBCASE("two emulators run side by side") {
        Emulator other(cfg);
        const int p2 = other.start();
        CHECK(p2 != port);
        wire::RwsClient c(other.url(), cfg.credentials);
        CHECK(c.get(wire::path::kJointTarget).ok());
        other.stop();
        CHECK_THROWS_AS(c.get(wire::path::kJointTarget), wire::TransportError);
    }

    SUBCASE("camera delay stretches reads while recognizing") {
        emu.set_camera_delay_ms(150);
        wire::RwsClient c(emu.url(), cfg.credentials);
        auto time_get = [&] {
            const auto t0 = std::chrono::steady_clock::now();
            c.get(wire::path::kJointTarget);
            return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        };
        CHECK(time_get() < 100);
        emu.execution(ExecutionAction::Start);
        emu.wait_ticks(static_cast<std::uint64_t>(0.6 * 250));
        REQUIRE(emu.snapshot()->cell.camera_busy);
        CHECK(time_get() >= 150);
    }

    emu.stop();
    CHECK_FALSE(emu.running());
}
