#include "dtwin/emulator/service.hpp"

#include "dtwin/emulator/phase_image.hpp"
#include "dtwin/kinematics/config.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <iostream>

namespace dtwin::emu {

using namespace std::chrono_literals;

namespace {

kin::JointConfig joints_deg(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return kin::JointConfig::from_degrees(v);
}

std::int64_t epoch_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(wire::encode(wire::ErrorMsg{code, message, std::nullopt}), "application/json");
}

void reply(httplib::Response& res, const CommandResult& r) {
    res.status = r.status;
    if (!r.ok()) res.set_content(wire::encode(r.error), "application/json");
}

}  // namespace

EmulatorConfig emulator_config_from_json(const nlohmann::json& j) {
    EmulatorConfig cfg;
    auto& wc = cfg.workcell;
    wc.dh = kin::dh_table_from_json(j);
    if (j.contains("timings")) {
        const auto& t = j.at("timings");
        wc.timings.spawn_s = t.value("spawn_s", wc.timings.spawn_s);
        wc.timings.recognize_s = t.value("recognize_s", wc.timings.recognize_s);
        wc.timings.convey_s = t.value("convey_s", wc.timings.convey_s);
        wc.timings.at_b_s = t.value("at_b_s", wc.timings.at_b_s);
    }
    if (j.contains("waypoints_deg")) {
        const auto& w = j.at("waypoints_deg");
        if (w.contains("home")) wc.waypoints.home = joints_deg(w.at("home"));
        if (w.contains("above_b")) wc.waypoints.above_b = joints_deg(w.at("above_b"));
        if (w.contains("at_b")) wc.waypoints.at_b = joints_deg(w.at("at_b"));
        if (w.contains("above_pallet")) wc.waypoints.above_pallet = joints_deg(w.at("above_pallet"));
        if (w.contains("slots")) {
            const auto& s = w.at("slots");
            if (!s.is_array() || s.size() != 3) throw std::invalid_argument("config: waypoints_deg.slots needs 3 entries");
            for (std::size_t i = 0; i < 3; ++i) wc.waypoints.slot[i] = joints_deg(s[i]);
        }
    }
    wc.waypoints.piece_height_mm = j.value("piece_height_mm", wc.waypoints.piece_height_mm);
    wc.tick_hz = j.value("tick_hz", wc.tick_hz);
    wc.speed_scale = j.value("speed_scale", wc.speed_scale);
    cfg.camera_delay_ms = j.value("camera_delay_ms", cfg.camera_delay_ms);
    if (j.contains("credentials")) {
        const auto& c = j.at("credentials");
        cfg.credentials.username = c.value("username", cfg.credentials.username);
        cfg.credentials.password = c.value("password", cfg.credentials.password);
        cfg.credentials.realm = c.value("realm", cfg.credentials.realm);
        cfg.credentials.nonce_lifetime = std::chrono::seconds(
            c.value("nonce_lifetime_s", static_cast<std::int64_t>(cfg.credentials.nonce_lifetime.count())));
    }
    return cfg;
}

struct Emulator::Http {
    httplib::Server server;
};

Emulator::Emulator(EmulatorConfig cfg)
    : cfg_(std::move(cfg)),
      http_(std::make_unique<Http>()),
      verifier_(cfg_.credentials, {}, cfg_.seed),
      camera_delay_ms_(cfg_.camera_delay_ms) {
    cfg_.workcell.dh.validate();
    cell_ = std::make_unique<Workcell>(cfg_.workcell);
    publish();
    install_routes();
}

Emulator::~Emulator() { stop(); }

std::string Emulator::url() const { return "http://" + cfg_.host + ":" + std::to_string(port_); }

int Emulator::start() {
    if (running_) return port_;
    // restart the simulated clock at wall-clock now so sample timestamps are epoch ms
    cfg_.workcell.epoch_ms = epoch_now_ms();
    cell_ = std::make_unique<Workcell>(cfg_.workcell);
    {
        std::lock_guard lock(log_mu_);
        trajectory_.clear();
        spy_.clear();
        spy_copied_ = 0;
    }
    publish();

    auto& svr = http_->server;
    svr.set_tcp_nodelay(true);
    svr.set_keep_alive_max_count(1u << 30);
    svr.set_keep_alive_timeout(5);
    const int threads = cfg_.http_threads;
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };

    if (cfg_.port == 0) {
        port_ = svr.bind_to_any_port(cfg_.host);
        if (port_ <= 0) throw StartupError("cannot bind emulator on " + cfg_.host);
    } else {
        if (!svr.bind_to_port(cfg_.host, cfg_.port)) {
            throw StartupError("cannot bind emulator on " + cfg_.host + ":" + std::to_string(cfg_.port));
        }
        port_ = cfg_.port;
    }
    stop_ = false;
    running_ = true;
    tick_thread_ = std::thread([this] { tick_loop(); });
    http_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    return port_;
}

void Emulator::stop() {
    if (!running_) return;
    stop_ = true;
    http_->server.stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (tick_thread_.joinable()) tick_thread_.join();
    running_ = false;
    // a stopped httplib server cannot be restarted; build a fresh one
    http_ = std::make_unique<Http>();
    install_routes();
    // fail anything still queued
    std::lock_guard lock(cmd_mu_);
    for (auto& [cmd, promise] : cmds_) {
        promise.set_value(CommandResult::failure(503, "unavailable", "controller stopped"));
    }
    cmds_.clear();
}

void Emulator::publish() {
    auto s = std::make_shared<EmulatorSnapshot>();
    s->tick = cell_->tick_count();
    s->timestamp_ms = cell_->timestamp_ms();
    s->joints = cell_->joints();
    s->tcp = cell_->tcp();
    s->io = cell_->io();
    s->exec = cell_->execution_state();
    s->cell = cell_->state();

    const wire::SpyLogMsg fresh = cell_->spylog(spy_copied_);
    {
        std::lock_guard lock(log_mu_);
        trajectory_.push_back({s->tick, s->timestamp_ms, s->joints, s->tcp});
        while (trajectory_.size() > cfg_.trajectory_capacity) trajectory_.pop_front();
        for (const auto& e : fresh.events) {
            spy_.push_back(e);
            if (cfg_.log_to_stdout) std::cout << "[emulator] " << e.text << std::endl;
        }
        spy_copied_ = fresh.next_since;
        const std::size_t cap = cfg_.workcell.spylog_capacity;
        if (spy_.size() > cap) spy_.erase(spy_.begin(), spy_.begin() + static_cast<std::ptrdiff_t>(spy_.size() - cap));
    }
    {
        std::lock_guard lock(snap_mu_);
        snap_ = std::move(s);
    }
    snap_cv_.notify_all();
}

void Emulator::tick_loop() {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg_.workcell.tick_hz));
    auto next = std::chrono::steady_clock::now();
    while (!stop_) {
        std::vector<std::pair<Command, std::promise<CommandResult>>> batch;
        {
            std::lock_guard lock(cmd_mu_);
            batch.swap(cmds_);
        }
        for (auto& [cmd, promise] : batch) promise.set_value(cmd(*cell_));

        cell_->tick();
        publish();

        next += period;
        const auto now = std::chrono::steady_clock::now();
        if (now - next > 1s) next = now;  // stalled (debugger, suspend): do not replay the backlog
        if (next > now) std::this_thread::sleep_until(next);
    }
}

CommandResult Emulator::submit(Command cmd) {
    if (!running_) return cmd(*cell_);
    std::future<CommandResult> fut;
    {
        std::lock_guard lock(cmd_mu_);
        std::promise<CommandResult> p;
        fut = p.get_future();
        cmds_.emplace_back(std::move(cmd), std::move(p));
    }
    if (fut.wait_for(2s) != std::future_status::ready) {
        return CommandResult::failure(503, "unavailable", "controller did not apply the command in time");
    }
    return fut.get();
}

CommandResult Emulator::execution(ExecutionAction action) {
    return submit([action](Workcell& w) { return w.execution(action); });
}

CommandResult Emulator::update_jog_target(const std::array<double, 6>& degrees) {
    return submit([degrees](Workcell& w) { return w.update_jog_target(degrees); });
}

CommandResult Emulator::set_io(const std::string& name, int value) {
    return submit([name, value](Workcell& w) { return w.set_io(name, value); });
}

std::shared_ptr<const EmulatorSnapshot> Emulator::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
}

void Emulator::wait_ticks(std::uint64_t n) const {
    std::unique_lock lock(snap_mu_);
    const std::uint64_t target = snap_->tick + n;
    snap_cv_.wait_for(lock, 10s, [&] { return snap_->tick >= target || !running_; });
}

std::vector<TrajectorySample> Emulator::trajectory_log() const {
    std::lock_guard lock(log_mu_);
    return {trajectory_.begin(), trajectory_.end()};
}

wire::SpyLogMsg Emulator::spylog(std::uint64_t since) const {
    std::lock_guard lock(log_mu_);
    wire::SpyLogMsg m;
    auto it = std::upper_bound(spy_.begin(), spy_.end(), since,
                               [](std::uint64_t s, const wire::SpyEvent& e) { return s < e.seq; });
    m.events.assign(it, spy_.end());
    m.next_since = m.events.empty() ? since : m.events.back().seq;
    return m;
}

void Emulator::install_routes() {
    auto& svr = http_->server;

    // digest check, then the camera latency for reads
    auto guarded = [this](bool is_read, auto handler) {
        return [this, is_read, handler](const httplib::Request& req, httplib::Response& res) {
            const auto verdict = verifier_.verify(req.method, req.target, req.get_header_value("Authorization"));
            if (verdict != wire::DigestVerdict::Ok) {
                const bool stale = verdict == wire::DigestVerdict::Stale ||
                                   verdict == wire::DigestVerdict::UnknownNonce;
                res.set_header("WWW-Authenticate", wire::format_challenge(verifier_.challenge(stale)));
                reply_error(res, 401, "unauthorized", std::string(wire::to_string(verdict)));
                return;
            }
            if (is_read) {
                const int delay = camera_delay_ms_;
                if (delay > 0 && snapshot()->cell.camera_busy) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
                }
            }
            handler(req, res);
        };
    };

    svr.Get(std::string(wire::path::kJointTarget), guarded(true, [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        wire::JointTargetMsg m;
        m.joints = s->joints.degrees();
        m.seq = ++seq_joint_;
        m.timestamp_ms = s->timestamp_ms;
        res.set_content(wire::encode(m), "application/json");
    }));

    svr.Get(std::string(wire::path::kRobTarget), guarded(true, [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        wire::RobTargetMsg m;
        m.x = s->tcp.position.x();
        m.y = s->tcp.position.y();
        m.z = s->tcp.position.z();
        m.q1 = s->tcp.orientation.w();
        m.q2 = s->tcp.orientation.x();
        m.q3 = s->tcp.orientation.y();
        m.q4 = s->tcp.orientation.z();
        m.seq = ++seq_rob_;
        m.timestamp_ms = s->timestamp_ms;
        res.set_content(wire::encode(m), "application/json");
    }));

    svr.Get(std::string(wire::path::kSignals), guarded(true, [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        wire::IoSnapshotMsg m;
        m.signals = s->io;
        m.seq = ++seq_io_;
        m.timestamp_ms = s->timestamp_ms;
        res.set_content(wire::encode(m), "application/json");
    }));

    svr.Get(std::string(wire::path::kSpyLog), guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t since = 0;
        if (req.has_param("since")) {
            try {
                since = std::stoull(req.get_param_value("since"));
            } catch (const std::exception&) {
                reply_error(res, 400, "invalid", "since must be a non-negative integer");
                return;
            }
        }
        res.set_content(wire::encode(spylog(since)), "application/json");
    }));

    svr.Get(std::string(wire::path::kCameraSnapshot), guarded(true, [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        std::vector<std::string> lines = {"CAMERA 1", "PHASE " + std::string(to_string(s->exec.phase)),
                                          "CYCLE " + std::to_string(s->exec.cycle_count)};
        if (s->cell.piece) {
            lines.push_back("PIECE " + std::string(s->cell.piece->recognized ? to_string(s->cell.piece->shape) : "UNKNOWN"));
        }
        if (s->cell.camera_busy) lines.emplace_back("RECOGNIZING...");
        const auto jpeg = render_text_jpeg(lines);
        res.set_content(std::string(jpeg.begin(), jpeg.end()), "image/jpeg");
    }));

    svr.Post(std::string(wire::path::kExecution), guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
        const auto action = parse_action(req.get_param_value("action"));
        if (!action) {
            reply_error(res, 400, "invalid", "action must be resetpp, start or stop");
            return;
        }
        reply(res, execution(*action));
    }));

    svr.Post(std::string(wire::path::kJogSymbol), guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
        if (req.get_param_value("action") != "set") {
            reply_error(res, 400, "invalid", "action must be set");
            return;
        }
        wire::JogTargetMsg m;
        try {
            m = wire::decode_jog_target(req.body);
        } catch (const wire::ProtocolError& e) {
            reply_error(res, 400, "invalid", e.what());
            return;
        }
        reply(res, update_jog_target(m.value));
    }));

    svr.Post(R"(/rw/iosystem/signals/([A-Za-z0-9_]+))",
             guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
                 if (req.get_param_value("action") != "set") {
                     reply_error(res, 400, "invalid", "action must be set");
                     return;
                 }
                 int value = -1;
                 try {
                     const auto body = nlohmann::json::parse(req.body);
                     value = body.at("value").get<int>();
                 } catch (const std::exception&) {
                     reply_error(res, 400, "invalid", "body must be {\"value\": 0|1}");
                     return;
                 }
                 reply(res, set_io(req.matches[1], value));
             }));

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            res.set_content(wire::encode(wire::ErrorMsg{"not_found", "no such resource", std::nullopt}),
                            "application/json");
        }
    });
}

}  // namespace dtwin::emu
