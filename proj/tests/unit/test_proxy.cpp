#include <doctest.h>

#include "dtwin/emulator/service.hpp"
#include "dtwin/proxy/proxy.hpp"

#include <httplib.h>

#include <map>
#include <sstream>

using namespace dtwin;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct Rig {
    emu::Emulator emulator;
    std::unique_ptr<twin::Twin> tw;
    std::unique_ptr<motion::MotionGateway> gw;
    std::unique_ptr<proxy::Proxy> px;

    Rig() : emulator(config()) {
        emulator.start();
        twin::TwinOptions o;
        o.controller_url = emulator.url();
        o.credentials = emulator.config().credentials;
        tw = std::make_unique<twin::Twin>(o);
        tw->start();
        REQUIRE(tw->wait_until(
            [](const twin::TwinState& s) { return s.connection == twin::ConnectionState::Up && s.joints && s.io; }, 3s));
        gw = std::make_unique<motion::MotionGateway>(*tw);
        px = std::make_unique<proxy::Proxy>(*tw, *gw);
        px->start();
    }
    ~Rig() {
        px->stop();
        gw.reset();
        tw->stop();
        emulator.stop();
    }

    static emu::EmulatorConfig config() {
        emu::EmulatorConfig c;
        c.workcell.timings = {0.1, 0.2, 0.3, 0.05};
        c.seed = 9;
        return c;
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", px->port());
        c.set_read_timeout(10s);
        return c;
    }

    json post(const json& body, int expect) {
        auto c = client();
        auto r = c.Post("/api/command", body.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == expect);
        return json::parse(r->body);
    }

    json wait_ticket(std::uint64_t id) {
        auto c = client();
        const auto until = std::chrono::steady_clock::now() + 10s;
        while (std::chrono::steady_clock::now() < until) {
            auto r = c.Get("/api/ticket/" + std::to_string(id));
            REQUIRE(r);
            REQUIRE(r->status == 200);
            auto t = json::parse(r->body);
            if (t.at("status") != "pending") return t;
            std::this_thread::sleep_for(20ms);
        }
        FAIL("ticket never resolved");
        return {};
    }
};

struct SseEvent {
    std::string name;
    json data;
    std::chrono::steady_clock::time_point at;
};

// Reads the event stream for `duration` and returns the parsed events.
std::vector<SseEvent> read_stream(int port, std::chrono::milliseconds duration) {
    std::vector<SseEvent> out;
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(5s);
    std::string buf;
    const auto until = std::chrono::steady_clock::now() + duration;
    c.Get("/api/stream", [&](const char* data, std::size_t n) {
        buf.append(data, n);
        std::size_t end;
        while ((end = buf.find("\n\n")) != std::string::npos) {
            std::istringstream block(buf.substr(0, end));
            buf.erase(0, end + 2);
            SseEvent ev;
            ev.at = std::chrono::steady_clock::now();
            std::string line;
            while (std::getline(block, line)) {
                if (line.rfind("event: ", 0) == 0) ev.name = line.substr(7);
                if (line.rfind("data: ", 0) == 0) ev.data = json::parse(line.substr(6));
            }
            out.push_back(std::move(ev));
        }
        return std::chrono::steady_clock::now() < until;
    });
    return out;
}

}  // namespace

TEST_CASE("command bodies are validated before reaching the gateway") {
    Rig rig;
    auto err = rig.post({{"kind", "teleport"}}, 400);
    CHECK(err.at("field") == "kind");
    err = rig.post({{"kind", "pointer"}, {"action", "jump"}}, 400);
    CHECK(err.at("field") == "action");
    err = rig.post({{"kind", "jog"}, {"joints", {1, 2, 3}}}, 400);
    CHECK(err.at("field") == "joints");
    err = rig.post({{"kind", "jog"}, {"mode", "sideways"}, {"joints", {0, 0, 0, 0, 0, 0}}}, 400);
    CHECK(err.at("field") == "mode");
    err = rig.post({{"kind", "linear"}, {"dx", "far"}}, 400);
    CHECK(err.at("field") == "dx");
    err = rig.post({{"kind", "do"}, {"name", "DO_1"}}, 400);
    CHECK(err.at("field") == "value");

    auto c = rig.client();
    auto r = c.Post("/api/command", "{oops", "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
    r = c.Get("/api/ticket/999999");
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(rig.gw->jog_posts() == 0);
}

TEST_CASE("proxy serves state, commands and metrics") {
    Rig rig;
    auto c = rig.client();

    SUBCASE("state view") {
        auto r = c.Get("/api/state");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
        const auto v = json::parse(r->body);
        CHECK(v.at("connection") == "up");
        CHECK(v.at("joints").at("deg").size() == 6);
        CHECK(v.at("tcp").at("pos").size() == 3);
        std::set<std::string> names;
        for (const auto& s : v.at("io").at("signals")) names.insert(s.at("name").get<std::string>());
        for (auto m : wire::kMandatorySignals) CHECK(names.count(std::string(m)) == 1);
        CHECK(v.at("events").size() <= 100);
        CHECK(v.at("spylog").size() <= 200);
        CHECK(v.contains("refresh"));
        const auto creds = rig.emulator.config().credentials;
        CHECK(r->body.find(creds.password) == std::string::npos);
        CHECK(r->body.find(creds.username) == std::string::npos);
    }

    SUBCASE("snapshot joints equal twin joints at the same seq") {
        for (int i = 0; i < 20; ++i) {
            auto r = c.Get("/api/state");
            REQUIRE(r);
            const auto v = json::parse(r->body);
            const auto s = rig.tw->state();
            if (s.joints->seq != v.at("joints").at("seq").get<std::uint64_t>()) continue;
            CHECK(v.at("joints").at("deg").get<std::array<double, 6>>() == s.joints->q.degrees());
        }
    }

    SUBCASE("preflight") {
        auto r = c.Options("/api/command");
        REQUIRE(r);
        CHECK(r->status == 204);
        CHECK(r->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
    }

    SUBCASE("pointer start returns a ticket") {
        auto t = rig.post({{"kind", "pointer"}, {"action", "start"}}, 202);
        CHECK(t.at("ticket").get<std::uint64_t>() > 0);
        CHECK(rig.wait_ticket(t.at("ticket")).at("status") == "done");
        rig.post({{"kind", "pointer"}, {"action", "stop"}}, 202);
    }

    SUBCASE("jog outside the limits names the joint") {
        auto e = rig.post({{"kind", "jog"}, {"joints", {0, 0, 90, 0, 0, 0}}}, 400);
        CHECK(e.at("joint") == 3);
        CHECK(rig.gw->jog_posts() == 0);
    }

    SUBCASE("linear 100 mm along x shows in the state view") {
        const auto before = json::parse(c.Get("/api/state")->body).at("tcp").at("pos").get<std::array<double, 3>>();
        auto t = rig.post({{"kind", "linear"}, {"dx", 100}}, 202);
        const auto done = rig.wait_ticket(t.at("ticket"));
        REQUIRE(done.at("status") == "done");
        std::this_thread::sleep_for(100ms);
        const auto after = json::parse(c.Get("/api/state")->body).at("tcp").at("pos").get<std::array<double, 3>>();
        CHECK(std::abs(after[0] - before[0] - 100) <= 0.01);
        CHECK(std::abs(after[1] - before[1]) <= 0.01);
        CHECK(std::abs(after[2] - before[2]) <= 0.01);
    }

    SUBCASE("digital output") {
        auto t = rig.post({{"kind", "do"}, {"name", "DO_1"}, {"value", 1}}, 202);
        CHECK(rig.wait_ticket(t.at("ticket")).at("status") == "done");
        auto e = rig.post({{"kind", "do"}, {"name", "DI_IR"}, {"value", 1}}, 403);
        CHECK(e.contains("message"));
    }

    SUBCASE("metrics") {
        std::this_thread::sleep_for(2200ms);
        auto r = c.Get("/api/metrics");
        REQUIRE(r);
        const auto m = json::parse(r->body);
        for (auto name : {"joints", "robtarget", "io", "spylog"}) {
            const auto& series = m.at("streams").at(name);
            CHECK(series.size() >= 1);
            CHECK(series.size() <= 120);
            CHECK(series.at(0).at("warm_up").get<bool>());
            CHECK(series.at(0).at("period_ms").get<double>() > 0);
        }
    }

    SUBCASE("camera relay") {
        auto r = c.Get("/api/camera.jpg");
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(r->get_header_value("Content-Type") == "image/jpeg");
        REQUIRE(r->body.size() > 4);
        CHECK(static_cast<unsigned char>(r->body[0]) == 0xFF);
        CHECK(static_cast<unsigned char>(r->body[1]) == 0xD8);
    }

    SUBCASE("console placeholder") {
        auto r = c.Get("/");
        REQUIRE(r);
        CHECK(r->status == 200);
    }
}

TEST_CASE("event stream") {
    Rig rig;
    auto c = rig.client();
    rig.post({{"kind", "pointer"}, {"action", "start"}}, 202);

    std::vector<SseEvent> a, b;
    std::thread ta([&] { a = read_stream(rig.px->port(), 2500ms); });
    std::thread tb([&] { b = read_stream(rig.px->port(), 2500ms); });
    ta.join();
    tb.join();

    for (const auto* evs : {&a, &b}) {
        REQUIRE(!evs->empty());
        CHECK(evs->front().name == "snapshot");
        CHECK(evs->front().data.contains("spylog"));
        // one full second well inside the window, counted against the wall clock
        const auto t0 = evs->front().at + 500ms;
        const auto n = std::count_if(evs->begin(), evs->end(), [&](const SseEvent& e) {
            return e.name == "state" && e.at >= t0 && e.at < t0 + 1s;
        });
        CHECK(n >= 18);
        CHECK(std::any_of(evs->begin(), evs->end(), [](const SseEvent& e) { return e.name == "heartbeat"; }));
        std::uint64_t last = 0;
        for (const auto& e : *evs) {
            if (e.name != "state") continue;
            const auto seq = e.data.at("joints").at("seq").get<std::uint64_t>();
            CHECK(seq >= last);
            last = seq;
        }
    }

    // both clients see the same joint seq for every frame they share
    std::map<std::uint64_t, std::uint64_t> frames_a;
    for (const auto& e : a) {
        if (e.name == "state") frames_a[e.data.at("frame")] = e.data.at("joints").at("seq");
    }
    std::size_t shared = 0, states_b = 0;
    for (const auto& e : b) {
        if (e.name != "state") continue;
        ++states_b;
        auto it = frames_a.find(e.data.at("frame"));
        if (it == frames_a.end()) continue;
        ++shared;
        CHECK(it->second == e.data.at("joints").at("seq").get<std::uint64_t>());
    }
    CHECK(shared * 10 >= states_b * 9);

    // reconnecting starts again from a full snapshot
    const auto again = read_stream(rig.px->port(), 300ms);
    REQUIRE(!again.empty());
    CHECK(again.front().name == "snapshot");
    CHECK(again.front().data.contains("io"));

    const auto deadline = std::chrono::steady_clock::now() + 2s;
    while (rig.px->stream_clients() > 0 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(20ms);
    CHECK(rig.px->stream_clients() == 0);
    rig.post({{"kind", "pointer"}, {"action", "stop"}}, 202);
}

TEST_CASE("state is unavailable while the controller is down") {
    Rig rig;
    rig.emulator.stop();
    REQUIRE(rig.tw->wait_until([](const twin::TwinState& s) { return s.connection == twin::ConnectionState::Down; }, 5s));
    auto c = rig.client();
    auto r = c.Get("/api/state");
    REQUIRE(r);
    CHECK(r->status == 503);
    const auto v = json::parse(r->body);
    CHECK(v.at("error") == "unavailable");
    CHECK(!v.at("reason").get<std::string>().empty());
    rig.post({{"kind", "pointer"}, {"action", "start"}}, 503);
    r = c.Get("/api/camera.jpg");
    REQUIRE(r);
    CHECK(r->status == 502);
}
