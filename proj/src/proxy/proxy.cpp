#include "dtwin/proxy/proxy.hpp"

#include <httplib.h>

#include <stdexcept>

namespace dtwin::proxy {

using nlohmann::ordered_json;
using namespace std::chrono_literals;
using motion::GatewayError;

namespace {

ordered_json joints_json(const twin::JointSample& j, twin::SteadyClock::time_point now) {
    ordered_json o;
    o["deg"] = j.q.degrees();
    o["seq"] = j.seq;
    o["timestamp_ms"] = j.timestamp_ms;
    o["age_ms"] = twin::age_ms(j.received, now);
    return o;
}

ordered_json tcp_json(const twin::TcpSample& t, twin::SteadyClock::time_point now) {
    ordered_json o;
    o["pos"] = {t.pose.position.x(), t.pose.position.y(), t.pose.position.z()};
    o["quat"] = {t.pose.orientation.w(), t.pose.orientation.x(), t.pose.orientation.y(), t.pose.orientation.z()};
    o["seq"] = t.seq;
    o["timestamp_ms"] = t.timestamp_ms;
    o["age_ms"] = twin::age_ms(t.received, now);
    return o;
}

ordered_json io_json(const twin::IoSample& io, twin::SteadyClock::time_point now) {
    ordered_json o;
    o["seq"] = io.msg.seq;
    o["timestamp_ms"] = io.msg.timestamp_ms;
    o["age_ms"] = twin::age_ms(io.received, now);
    auto& sigs = o["signals"] = ordered_json::array();
    for (const auto& s : io.msg.signals) {
        sigs.push_back({{"name", s.name}, {"kind", wire::to_string(s.kind)}, {"value", s.value}});
    }
    return o;
}

ordered_json spy_json(const wire::SpyEvent& e) {
    return {{"seq", e.seq}, {"timestamp_ms", e.timestamp_ms}, {"level", wire::to_string(e.level)}, {"text", e.text}};
}

// Scalar parts shared by the snapshot and every stream frame.
ordered_json core_json(const twin::TwinState& s) {
    const auto now = twin::SteadyClock::now();
    ordered_json o;
    o["connection"] = twin::to_string(s.connection);
    if (!s.reason.empty()) o["reason"] = s.reason;
    o["phase"] = s.phase ? ordered_json(*s.phase) : ordered_json(nullptr);
    o["joints"] = s.joints ? joints_json(*s.joints, now) : ordered_json(nullptr);
    o["tcp"] = s.tcp ? tcp_json(*s.tcp, now) : ordered_json(nullptr);
    o["io"] = s.io ? io_json(*s.io, now) : ordered_json(nullptr);
    o["events_total"] = s.events_total;
    return o;
}

ordered_json new_events(const twin::TwinState& s, std::uint64_t seen_total) {
    auto out = ordered_json::array();
    const auto fresh = std::min<std::uint64_t>(s.events_total - seen_total, s.events->size());
    for (auto it = s.events->end() - static_cast<std::ptrdiff_t>(fresh); it != s.events->end(); ++it) {
        out.push_back(twin::to_json(*it));
    }
    return out;
}

ordered_json new_spylog(const twin::TwinState& s, std::uint64_t seen_seq) {
    auto out = ordered_json::array();
    for (const auto& e : *s.spylog) {
        if (e.seq > seen_seq) out.push_back(spy_json(e));
    }
    return out;
}

std::string sse(std::string_view event, const ordered_json& data) {
    return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

const ordered_json& field(const nlohmann::json& body, const char* name) {
    static const ordered_json missing;
    return body.contains(name) ? reinterpret_cast<const ordered_json&>(body.at(name)) : missing;
}

double number(const nlohmann::json& body, const char* name, double fallback) {
    if (!body.contains(name)) return fallback;
    const auto& v = body.at(name);
    if (!v.is_number()) throw GatewayError(400, "invalid", std::string(name) + " must be a number", name);
    return v.get<double>();
}

void reply_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

ordered_json state_view(const twin::TwinState& s, const twin::Twin& tw, std::size_t events_tail,
                        std::size_t spylog_tail) {
    ordered_json o = core_json(s);
    auto events = ordered_json::array();
    const std::size_t skip = s.events->size() > events_tail ? s.events->size() - events_tail : 0;
    for (std::size_t i = skip; i < s.events->size(); ++i) events.push_back(twin::to_json((*s.events)[i]));
    o["events"] = std::move(events);
    auto spy = ordered_json::array();
    const std::size_t sskip = s.spylog->size() > spylog_tail ? s.spylog->size() - spylog_tail : 0;
    for (std::size_t i = sskip; i < s.spylog->size(); ++i) spy.push_back(spy_json((*s.spylog)[i]));
    o["spylog"] = std::move(spy);
    auto& refresh = o["refresh"] = ordered_json::object();
    for (twin::Stream st : twin::kStreams) {
        const auto w = tw.meter(st).last();
        refresh[std::string(twin::to_string(st))] = w ? twin::to_json(*w, twin::to_string(st)) : ordered_json(nullptr);
    }
    return o;
}

ordered_json metrics_view(twin::Twin& tw, std::size_t windows) {
    tw.roll_meters();
    ordered_json o;
    o["window_ms"] = 1000;
    auto& streams = o["streams"] = ordered_json::object();
    for (twin::Stream st : twin::kStreams) {
        auto series = ordered_json::array();
        auto all = tw.meter(st).windows();
        const std::size_t skip = all.size() > windows ? all.size() - windows : 0;
        for (std::size_t i = skip; i < all.size(); ++i) {
            auto w = twin::to_json(all[i], twin::to_string(st));
            w.erase("stream");
            series.push_back(std::move(w));
        }
        streams[std::string(twin::to_string(st))] = std::move(series);
    }
    return o;
}

motion::Ticket run_command(motion::MotionGateway& gw, const nlohmann::json& body) {
    if (!body.is_object()) throw GatewayError(400, "invalid", "command body must be a JSON object", "");
    if (!body.contains("kind") || !body.at("kind").is_string()) {
        throw GatewayError(400, "invalid", "kind must be one of pointer, jog, linear, do", "kind");
    }
    const auto kind = body.at("kind").get<std::string>();
    if (kind == "pointer") {
        const auto& a = field(body, "action");
        std::optional<motion::PointerAction> action;
        if (a.is_string()) action = motion::parse_pointer(a.get<std::string>() == "resetpp" ? "reset" : a.get<std::string>());
        if (!action) throw GatewayError(400, "invalid", "action must be reset, start or stop", "action");
        return gw.pointer_op(*action);
    }
    if (kind == "jog") {
        motion::JogCommand cmd;
        const auto& mode = field(body, "mode");
        if (mode.is_null() || mode == "absolute") {
            cmd.mode = motion::JogCommand::Mode::Absolute;
        } else if (mode == "relative") {
            cmd.mode = motion::JogCommand::Mode::Relative;
        } else {
            throw GatewayError(400, "invalid", "mode must be absolute or relative", "mode");
        }
        const auto& joints = field(body, "joints");
        if (!joints.is_array() || joints.size() != 6) {
            throw GatewayError(400, "invalid", "joints must be an array of 6 numbers (deg)", "joints");
        }
        for (std::size_t i = 0; i < 6; ++i) {
            if (!joints[i].is_number()) {
                throw GatewayError(400, "invalid", "joints must be an array of 6 numbers (deg)", "joints");
            }
            cmd.joints_deg[i] = joints[i].get<double>();
        }
        return gw.jog(cmd);
    }
    if (kind == "linear") {
        motion::LinearCommand cmd;
        cmd.dx = number(body, "dx", 0);
        cmd.dy = number(body, "dy", 0);
        cmd.dz = number(body, "dz", 0);
        const auto& keep = field(body, "keep_orientation");
        if (!keep.is_null()) {
            if (!keep.is_boolean()) throw GatewayError(400, "invalid", "keep_orientation must be a boolean", "keep_orientation");
            cmd.keep_orientation = keep.get<bool>();
        }
        return gw.linear_move(cmd);
    }
    if (kind == "do") {
        const auto& name = field(body, "name");
        if (!name.is_string()) throw GatewayError(400, "invalid", "name must be a signal name", "name");
        const auto& value = field(body, "value");
        if (!value.is_number_integer()) throw GatewayError(400, "invalid", "value must be 0 or 1", "value");
        return gw.set_do(name.get<std::string>(), value.get<int>());
    }
    throw GatewayError(400, "invalid", "kind must be one of pointer, jog, linear, do", "kind");
}

struct Proxy::Http {
    httplib::Server server;
};

Proxy::Proxy(twin::Twin& tw, motion::MotionGateway& gw, ProxyOptions opts)
    : twin_(tw), gw_(gw), opts_(std::move(opts)), http_(std::make_unique<Http>()) {
    install_routes();
}

Proxy::~Proxy() { stop(); }

std::string Proxy::url() const { return "http://" + opts_.host + ":" + std::to_string(port_); }

int Proxy::start() {
    auto& svr = http_->server;
    svr.set_tcp_nodelay(true);
    const int threads = opts_.http_threads;
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    if (opts_.port == 0) {
        port_ = svr.bind_to_any_port(opts_.host);
        if (port_ <= 0) throw std::runtime_error("cannot bind proxy on " + opts_.host);
    } else {
        if (!svr.bind_to_port(opts_.host, opts_.port)) {
            throw std::runtime_error("cannot bind proxy on " + opts_.host + ":" + std::to_string(opts_.port));
        }
        port_ = opts_.port;
    }
    stop_ = false;
    frame_thread_ = std::thread([this] { frame_loop(); });
    server_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
    svr.wait_until_ready();
    return port_;
}

void Proxy::stop() {
    if (!server_thread_.joinable()) return;
    stop_ = true;
    frame_cv_.notify_all();
    http_->server.stop();
    server_thread_.join();
    if (frame_thread_.joinable()) frame_thread_.join();
}

void Proxy::frame_loop() {
    std::uint64_t last_version = 0;
    while (!stop_) {
        const auto s = twin_.state();
        if (s.version != last_version) {
            last_version = s.version;
            std::lock_guard lock(frame_mu_);
            ++frame_.id;
            frame_.state = s;
            frame_cv_.notify_all();
        }
        std::this_thread::sleep_for(opts_.stream_period);
    }
}

Proxy::Frame Proxy::wait_frame(std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(frame_mu_);
    frame_cv_.wait_for(lock, timeout, [&] { return frame_.id > after || stop_; });
    return frame_;
}

void Proxy::install_routes() {
    auto& svr = http_->server;

    svr.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin}});
    svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Max-Age", "600");
    });

    svr.Get("/api/state", [this](const httplib::Request&, httplib::Response& res) {
        const auto s = twin_.state();
        if (s.connection == twin::ConnectionState::Down) {
            reply_json(res, 503, {{"error", "unavailable"}, {"connection", "down"}, {"reason", s.reason}});
            return;
        }
        reply_json(res, 200, state_view(s, twin_, opts_.events_tail, opts_.spylog_tail));
    });

    svr.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) {
        struct Client {
            bool snapshot_sent = false;
            std::uint64_t frame = 0;
            std::uint64_t events_total = 0;
            std::uint64_t spy_seq = 0;
            twin::SteadyClock::time_point last_heartbeat = twin::SteadyClock::now();
        };
        auto client = std::make_shared<Client>();
        ++clients_;
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, client](std::size_t, httplib::DataSink& sink) {
                if (stop_) return false;
                auto remember = [&](const twin::TwinState& s) {
                    client->events_total = s.events_total;
                    if (!s.spylog->empty()) client->spy_seq = std::max(client->spy_seq, s.spylog->back().seq);
                };
                if (!client->snapshot_sent) {
                    const Frame f = wait_frame(0, 0ms);
                    const auto s = f.id ? f.state : twin_.state();
                    auto view = state_view(s, twin_, opts_.events_tail, opts_.spylog_tail);
                    view["frame"] = f.id;
                    client->snapshot_sent = true;
                    client->frame = f.id;
                    remember(s);
                    return sink.write(sse("snapshot", view).data(), sse("snapshot", view).size());
                }
                const auto now = twin::SteadyClock::now();
                const auto until_beat = opts_.heartbeat - std::chrono::duration_cast<std::chrono::milliseconds>(
                                                              now - client->last_heartbeat);
                const Frame f = wait_frame(client->frame, std::clamp(until_beat, 1ms, 200ms));
                if (stop_) return false;
                if (f.id > client->frame) {
                    auto msg = core_json(f.state);
                    msg["frame"] = f.id;
                    msg["events"] = new_events(f.state, client->events_total);
                    msg["spylog"] = new_spylog(f.state, client->spy_seq);
                    client->frame = f.id;
                    remember(f.state);
                    const auto text = sse("state", msg);
                    if (!sink.write(text.data(), text.size())) return false;
                }
                if (twin::SteadyClock::now() - client->last_heartbeat >= opts_.heartbeat) {
                    client->last_heartbeat = twin::SteadyClock::now();
                    const auto beat = sse("heartbeat", {{"frame", client->frame}});
                    if (!sink.write(beat.data(), beat.size())) return false;
                }
                return true;
            },
            [this](bool) { --clients_; });
    });

    svr.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            reply_json(res, 400, {{"error", "invalid"}, {"message", e.what()}, {"field", ""}});
            return;
        }
        try {
            const auto t = run_command(gw_, body);
            reply_json(res, 202, {{"ticket", t.id}, {"status", motion::to_string(t.status)}});
        } catch (const GatewayError& e) {
            reply_json(res, e.status(), motion::to_json(e));
        }
    });

    svr.Get(R"(/api/ticket/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t id = 0;
        try {
            id = std::stoull(req.matches[1]);
        } catch (const std::exception&) {
        }
        const auto t = gw_.ticket(id);
        if (!t) {
            reply_json(res, 404, {{"error", "not_found"}, {"message", "no such ticket"}});
            return;
        }
        reply_json(res, 200, motion::to_json(*t));
    });

    svr.Get("/api/metrics", [this](const httplib::Request& req, httplib::Response& res) {
        std::size_t n = 120;
        if (req.has_param("windows")) {
            try {
                n = std::min<std::size_t>(120, std::stoul(req.get_param_value("windows")));
            } catch (const std::exception&) {
                reply_json(res, 400, {{"error", "invalid"}, {"field", "windows"}});
                return;
            }
        }
        reply_json(res, 200, metrics_view(twin_, n));
    });

    svr.Get("/api/camera.jpg", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(camera_mu_);
        try {
            if (!camera_client_) {
                const auto& o = twin_.options();
                camera_client_ = std::make_unique<wire::RwsClient>(o.controller_url, o.credentials, o.client);
            }
            const auto r = camera_client_->get(wire::path::kCameraSnapshot);
            if (!r.ok()) {
                reply_json(res, 502, {{"error", "bad_gateway"}, {"message", "camera replied HTTP " + std::to_string(r.status)}});
                return;
            }
            res.set_header("Cache-Control", "no-store");
            res.set_content(r.body, "image/jpeg");
        } catch (const std::exception& e) {
            reply_json(res, 502, {{"error", "bad_gateway"}, {"message", e.what()}});
        }
    });

    if (opts_.static_dir) {
        svr.set_mount_point("/", opts_.static_dir->string());
    } else {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(
                "<!doctype html><title>twin proxy</title><h1>twin proxy</h1><ul>"
                "<li><a href=\"/api/state\">/api/state</a></li><li><a href=\"/api/stream\">/api/stream</a></li>"
                "<li><a href=\"/api/metrics\">/api/metrics</a></li><li><a href=\"/api/camera.jpg\">/api/camera.jpg</a></li>"
                "</ul><p>POST /api/command, GET /api/ticket/{id}</p>",
                "text/html");
        });
    }
}

}  // namespace dtwin::proxy
