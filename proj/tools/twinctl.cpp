#include "cli.hpp"

#include "dtwin/bench/bench.hpp"
#include "dtwin/emulator/service.hpp"
#include "dtwin/kinematics/config.hpp"
#include "dtwin/motion/gateway.hpp"
#include "dtwin/motion/solver_service.hpp"
#include "dtwin/proxy/proxy.hpp"
#include "dtwin/twin/twin.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace twinctl {

std::atomic<bool> g_stop{false};

void wait_for_stop(double seconds) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    while (!g_stop && (seconds <= 0 || std::chrono::steady_clock::now() < until)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

}  // namespace twinctl

using namespace dtwin;
using namespace twinctl;
using namespace std::chrono_literals;
using nlohmann::ordered_json;

namespace {

void on_signal(int) {
    g_stop = true;
    bench::g_interrupted = true;
}

std::string join(const std::array<double, 6>& v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    return os.str();
}

std::array<double, 6> six(const std::vector<double>& v) {
    std::array<double, 6> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

// Controller connection flags shared by the twin and proxy commands.
struct Controller {
    std::string url;
    std::string user = wire::DigestCredentials{}.username;
    std::string password = wire::DigestCredentials{}.password;
    double connect_timeout_s = 5.0;

    void add_to(CLI::App* app) {
        app->add_option("--controller-url", url, "Controller base URL (default $TWIN_CONTROLLER_URL)");
        app->add_option("--user", user, "Digest user name")->capture_default_str();
        app->add_option("--password", password, "Digest password");
        app->add_option("--connect-timeout", connect_timeout_s, "Seconds to wait for the first samples")
            ->capture_default_str();
    }

    twin::TwinOptions options() const {
        twin::TwinOptions o;
        o.controller_url = url;
        if (o.controller_url.empty()) {
            const char* env = std::getenv("TWIN_CONTROLLER_URL");
            o.controller_url = env ? env : "http://127.0.0.1:8080";
        }
        o.credentials.username = user;
        o.credentials.password = password;
        return o;
    }

    std::unique_ptr<twin::Twin> connect() const {
        auto tw = std::make_unique<twin::Twin>(options());
        tw->start();
        const bool up = tw->wait_until(
            [](const twin::TwinState& s) {
                return s.connection == twin::ConnectionState::Up && s.joints && s.tcp && s.io;
            },
            std::chrono::milliseconds(static_cast<int>(connect_timeout_s * 1000)));
        if (!up) {
            const auto reason = tw->state().reason;
            tw->stop();
            throw CommandFailed("controller " + tw->options().controller_url + " not reachable: " + reason);
        }
        return tw;
    }
};

std::string tcp_text(const kin::Pose& p) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << "(" << p.position.x() << ", " << p.position.y() << ", "
       << p.position.z() << ") mm";
    return os.str();
}

// Waits for a ticket and reports it. Exit 0 only when it is done.
int report_ticket(motion::MotionGateway& gw, const motion::Ticket& t, bool json, double timeout_s) {
    const auto r = gw.wait(t.id, std::chrono::milliseconds(static_cast<int>(timeout_s * 1000)));
    const motion::Ticket& final = r ? *r : t;
    if (json) {
        std::cout << motion::to_json(final).dump() << std::endl;
    } else {
        std::cout << "ticket " << final.id << " (" << final.kind << "): " << motion::to_string(final.status);
        if (final.elapsed_ms) std::cout << " in " << std::fixed << std::setprecision(1) << *final.elapsed_ms << " ms";
        if (!final.reason.empty()) std::cout << ": " << final.reason;
        std::cout << "\n";
        if (final.final_joints) std::cout << "joints deg: " << join(final.final_joints->degrees()) << "\n";
        if (final.final_pos_err_mm) {
            std::cout << "position error: " << std::scientific << std::setprecision(2) << *final.final_pos_err_mm
                      << " mm\n";
        }
    }
    return final.status == motion::TicketStatus::Done ? kOk : kFailed;
}

int report_gateway_error(const motion::GatewayError& e, bool json) {
    if (json) {
        std::cout << motion::to_json(e).dump() << std::endl;
    } else {
        std::cerr << "rejected (" << e.status() << " " << e.code() << "): " << e.what() << "\n";
    }
    return kFailed;
}

void print_state_line(const twin::TwinState& s) {
    std::cout << twin::to_string(s.connection);
    if (s.phase) std::cout << "  phase " << *s.phase;
    if (s.joints) std::cout << "  joints [" << join(s.joints->q.degrees(), 2) << "] deg";
    if (s.tcp) std::cout << "  tcp " << tcp_text(s.tcp->pose);
    std::cout << "  events " << s.events_total;
    if (s.connection != twin::ConnectionState::Up && !s.reason.empty()) std::cout << "  (" << s.reason << ")";
    std::cout << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    CLI::App app{"Digital twin of a robotic stacking cell: controller emulator, twin client, motion and proxy"};
    app.require_subcommand(1);
    int exit_code = kOk;

    // emulator serve
    auto* emulator = app.add_subcommand("emulator", "Controller emulator");
    emulator->require_subcommand(1);
    auto* serve = emulator->add_subcommand("serve", "Serve the emulated controller until interrupted");
    struct {
        std::string config;
        std::string host = "127.0.0.1";
        int port = 8080;
        std::optional<int> camera_delay_ms;
        std::optional<double> speed_scale;
        bool log = false;
        bool start = false;
    } em;
    serve->add_option("--config", em.config, "Emulator config (JSON)")->check(CLI::ExistingFile);
    serve->add_option("--host", em.host, "Bind address")->capture_default_str();
    serve->add_option("--port", em.port, "Port (0: any free port)")->capture_default_str();
    serve->add_option("--camera-delay-ms", em.camera_delay_ms, "Delay added to every read while recognizing");
    serve->add_option("--speed-scale", em.speed_scale, "Fraction of the joint speed limits, in (0, 1]");
    serve->add_flag("--log", em.log, "Echo the spy log to stdout");
    serve->add_flag("--start", em.start, "Start the stacking program right away");
    serve->callback([&] {
        emu::EmulatorConfig cfg = em.config.empty() ? emu::EmulatorConfig{}
                                                    : emu::emulator_config_from_json(kin::load_json_file(em.config));
        cfg.host = em.host;
        cfg.port = em.port;
        if (em.camera_delay_ms) cfg.camera_delay_ms = *em.camera_delay_ms;
        if (em.speed_scale) cfg.workcell.speed_scale = *em.speed_scale;
        cfg.log_to_stdout = em.log;
        emu::Emulator e(cfg);
        e.start();
        std::cout << "controller emulator on " << e.url() << " (user \"" << cfg.credentials.username << "\")"
                  << std::endl;
        if (em.start) e.execution(emu::ExecutionAction::Start);
        wait_for_stop();
        e.stop();
        std::cout << "stopped" << std::endl;
    });

    // twin ...
    auto* twin_cmd = app.add_subcommand("twin", "Twin client against a controller");
    twin_cmd->require_subcommand(1);
    Controller ctl;
    bool json = false;
    double ticket_timeout_s = 30;
    auto twin_sub = [&](const std::string& name, const std::string& help) {
        auto* c = twin_cmd->add_subcommand(name, help);
        ctl.add_to(c);
        c->add_flag("--json", json, "Machine-readable output");
        return c;
    };

    double run_seconds = 0, run_interval = 1.0;
    auto* run = twin_sub("run", "Mirror the controller and print its state until interrupted");
    run->add_option("--duration", run_seconds, "Stop after this many seconds (0: until interrupted)");
    run->add_option("--interval", run_interval, "Seconds between state lines")->capture_default_str();
    run->callback([&] {
        auto tw = ctl.connect();
        const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(run_seconds);
        while (!g_stop && (run_seconds <= 0 || std::chrono::steady_clock::now() < until)) {
            const auto s = tw->state();
            if (json) {
                std::cout << proxy::state_view(s, *tw, 10, 10).dump() << std::endl;
            } else {
                print_state_line(s);
            }
            wait_for_stop(run_interval);
        }
        tw->stop();
    });

    std::vector<double> jog_abs, jog_rel;
    auto* jog = twin_sub("jog", "Move the joints (degrees) and wait until they settle");
    auto* abs_opt = jog->add_option("--absolute", jog_abs, "Target j1..j6, deg")->delimiter(',')->expected(6);
    auto* rel_opt = jog->add_option("--relative", jog_rel, "Offsets j1..j6, deg")->delimiter(',')->expected(6);
    abs_opt->excludes(rel_opt);
    jog->add_option("--timeout", ticket_timeout_s, "Seconds to wait for the ticket")->capture_default_str();
    jog->callback([&] {
        if (jog_abs.empty() && jog_rel.empty()) throw CLI::RequiredError("--absolute or --relative");
        auto tw = ctl.connect();
        motion::MotionGateway gw(*tw);
        try {
            const motion::JogCommand cmd{jog_abs.empty() ? motion::JogCommand::Mode::Relative
                                                         : motion::JogCommand::Mode::Absolute,
                                         six(jog_abs.empty() ? jog_rel : jog_abs)};
            exit_code = report_ticket(gw, gw.jog(cmd), json, ticket_timeout_s);
        } catch (const motion::GatewayError& e) {
            exit_code = report_gateway_error(e, json);
        }
        tw->stop();
    });

    motion::LinearCommand lin;
    bool free_orientation = false;
    auto* linear = twin_sub("linear", "Move the TCP by an offset in the base frame (mm) and wait");
    linear->add_option("--dx", lin.dx, "mm")->capture_default_str();
    linear->add_option("--dy", lin.dy, "mm")->capture_default_str();
    linear->add_option("--dz", lin.dz, "mm")->capture_default_str();
    linear->add_flag("--free-orientation", free_orientation, "Let the tool orientation change");
    linear->add_option("--timeout", ticket_timeout_s, "Seconds to wait for the ticket")->capture_default_str();
    linear->callback([&] {
        lin.keep_orientation = !free_orientation;
        auto tw = ctl.connect();
        motion::MotionGateway gw(*tw);
        try {
            exit_code = report_ticket(gw, gw.linear_move(lin), json, ticket_timeout_s);
        } catch (const motion::GatewayError& e) {
            exit_code = report_gateway_error(e, json);
        }
        tw->stop();
    });

    std::string pointer_action;
    auto* pointer = twin_sub("pointer", "Program pointer: reset, start or stop");
    pointer->add_option("action", pointer_action, "reset | start | stop")
        ->required()
        ->check(CLI::IsMember({"reset", "start", "stop"}));
    pointer->callback([&] {
        auto tw = ctl.connect();
        motion::MotionGateway gw(*tw);
        try {
            exit_code = report_ticket(gw, gw.pointer_op(*motion::parse_pointer(pointer_action)), json, ticket_timeout_s);
        } catch (const motion::GatewayError& e) {
            exit_code = report_gateway_error(e, json);
        }
        tw->stop();
    });

    std::string do_name;
    int do_value = 0;
    auto* do_cmd = twin_sub("do", "Set a digital output and wait until the controller reports it");
    do_cmd->add_option("name", do_name, "Signal name, e.g. DO_1")->required();
    do_cmd->add_option("value", do_value, "0 or 1")->required()->check(CLI::Range(0, 1));
    do_cmd->callback([&] {
        auto tw = ctl.connect();
        motion::MotionGateway gw(*tw);
        try {
            exit_code = report_ticket(gw, gw.set_do(do_name, do_value), json, ticket_timeout_s);
        } catch (const motion::GatewayError& e) {
            exit_code = report_gateway_error(e, json);
        }
        tw->stop();
    });

    std::string record_out, record_tcp_out;
    double record_seconds = 0;
    bool record_cycle = false;
    auto* record = twin_sub("record", "Record the joint trajectory with FK poses to CSV");
    record->add_option("--out", record_out, "CSV file (deg, mm)")->required();
    record->add_option("--tcp-out", record_tcp_out, "Also write the controller's robtarget log");
    auto* rec_dur = record->add_option("--duration", record_seconds, "Seconds to record");
    auto* rec_cycle = record->add_flag("--cycle", record_cycle, "Start the program and record one full cycle");
    rec_dur->excludes(rec_cycle);
    record->callback([&] {
        if (record_seconds <= 0 && !record_cycle) throw CLI::RequiredError("--duration or --cycle");
        auto tw = ctl.connect();
        auto& rec = tw->recorder();
        rec.start();
        if (record_cycle) {
            motion::MotionGateway gw(*tw);
            const auto t = gw.pointer_op(motion::PointerAction::Start);
            gw.wait(t.id, 5s);
            // one cycle ends when RETURN hands over to the next phase
            bool returned = false, ended = false;
            const auto deadline = std::chrono::steady_clock::now() + 120s;
            while (!g_stop && !ended && std::chrono::steady_clock::now() < deadline) {
                const auto s = tw->state();
                if (s.phase == "RETURN") returned = true;
                if (returned && s.phase && *s.phase != "RETURN") ended = true;
                std::this_thread::sleep_for(10ms);
            }
            rec.stop();
            gw.wait(gw.pointer_op(motion::PointerAction::Stop).id, 5s);
            if (!ended) exit_code = kFailed;
        } else {
            wait_for_stop(record_seconds);
            rec.stop();
        }
        std::ofstream os(record_out);
        if (!os) throw CommandFailed("cannot write " + record_out);
        rec.write_csv(os);
        if (!record_tcp_out.empty()) {
            std::ofstream ts(record_tcp_out);
            if (!ts) throw CommandFailed("cannot write " + record_tcp_out);
            ts << "t_ms,seq,x,y,z,qw,qx,qy,qz\n" << std::setprecision(12);
            for (const auto& r : rec.tcp_rows()) {
                const auto& p = r.pose;
                ts << r.t_ms << "," << r.seq << "," << p.position.x() << "," << p.position.y() << ","
                   << p.position.z() << "," << p.orientation.w() << "," << p.orientation.x() << ","
                   << p.orientation.y() << "," << p.orientation.z() << "\n";
            }
        }
        const auto n = rec.rows().size();
        if (json) {
            std::cout << ordered_json{{"rows", n}, {"tcp_rows", rec.tcp_rows().size()}, {"out", record_out}}.dump()
                      << std::endl;
        } else {
            std::cout << n << " rows written to " << record_out << std::endl;
        }
        tw->stop();
    });

    double metrics_seconds = 5;
    std::string metrics_jsonl;
    auto* metrics = twin_sub("metrics", "Poll for a while and print the per-thread refresh table");
    metrics->add_option("--duration", metrics_seconds, "Seconds to poll")->capture_default_str();
    metrics->add_option("--jsonl", metrics_jsonl, "Write every closed window as JSON lines");
    metrics->callback([&] {
        auto tw = ctl.connect();
        wait_for_stop(metrics_seconds);
        tw->roll_meters();
        tw->stop();
        if (!metrics_jsonl.empty()) {
            std::ofstream os(metrics_jsonl);
            tw->write_stats_jsonl(os);
        }
        if (json) {
            std::cout << proxy::metrics_view(*tw).dump() << std::endl;
            return;
        }
        auto rows = ordered_json::array();
        for (twin::Stream s : twin::kStreams) {
            rows.push_back(bench::to_json(bench::summarize(std::string(twin::to_string(s)), tw->meter(s).windows())));
        }
        print_stream_table(rows);
    });

    // ik ...
    auto* ik = app.add_subcommand("ik", "Inverse and forward kinematics");
    ik->require_subcommand(1);
    std::string kin_config;
    std::vector<double> ik_target, ik_seed{0, 0, 0, 0, 0, 0}, fk_joints;
    std::string solver_addr;
    auto load_kin = [&] {
        const nlohmann::json j = kin_config.empty() ? nlohmann::json::object() : kin::load_json_file(kin_config);
        return std::make_pair(kin::dh_table_from_json(j), kin::solver_defaults_from_json(j));
    };
    auto* solve = ik->add_subcommand("solve", "Solve for joints reaching a TCP pose");
    solve->add_option("--target", ik_target, "x,y,z (mm),qw,qx,qy,qz")->delimiter(',')->expected(7)->required();
    solve->add_option("--seed", ik_seed, "Seed j1..j6, deg")->delimiter(',')->expected(6)->capture_default_str();
    solve->add_option("--config", kin_config, "Kinematics config (JSON)")->check(CLI::ExistingFile);
    solve->add_option("--solver", solver_addr, "Use a running solver service at host:port");
    solve->add_flag("--json", json, "Print the solver reply");
    solve->callback([&] {
        const nlohmann::json req = {{"target",
                                     {{"pos", {ik_target[0], ik_target[1], ik_target[2]}},
                                      {"quat", {ik_target[3], ik_target[4], ik_target[5], ik_target[6]}}}},
                                    {"seed", ik_seed}};
        ordered_json rep;
        if (solver_addr.empty()) {
            const auto [dh, defaults] = load_kin();
            rep = ordered_json::parse(motion::handle_solver_line(dh, defaults, req.dump()));
        } else {
            const auto colon = solver_addr.rfind(':');
            if (colon == std::string::npos) throw CLI::ValidationError("--solver", "expected host:port");
            motion::SolverClient c(solver_addr.substr(0, colon), std::stoi(solver_addr.substr(colon + 1)));
            rep = ordered_json::parse(c.call(req).dump());
        }
        if (rep.contains("error")) {
            std::cerr << "invalid request: " << rep.value("message", "") << "\n";
            exit_code = kUsage;
            return;
        }
        const bool ok = rep.at("converged").get<bool>();
        if (json) {
            std::cout << rep.dump() << std::endl;
        } else {
            std::cout << (ok ? "converged" : "did not converge") << " after " << rep.at("iterations").get<int>()
                      << " iterations, position error " << std::scientific << std::setprecision(2)
                      << rep.at("pos_err_mm").get<double>() << " mm\n"
                      << "solution deg: " << join(rep.at("solution").get<std::array<double, 6>>()) << std::endl;
        }
        exit_code = ok ? kOk : kFailed;
    });

    auto* fk = ik->add_subcommand("fk", "TCP pose of a joint configuration");
    fk->add_option("--joints", fk_joints, "j1..j6, deg")->delimiter(',')->expected(6)->required();
    fk->add_option("--config", kin_config, "Kinematics config (JSON)")->check(CLI::ExistingFile);
    fk->add_flag("--json", json, "Print the solver reply");
    fk->callback([&] {
        const auto [dh, defaults] = load_kin();
        const auto rep = ordered_json::parse(
            motion::handle_solver_line(dh, defaults, nlohmann::json{{"fk", fk_joints}}.dump()));
        if (rep.contains("error")) {
            std::cerr << "invalid request: " << rep.value("message", "") << "\n";
            exit_code = kUsage;
            return;
        }
        if (json) {
            std::cout << rep.dump() << std::endl;
            return;
        }
        const auto p = rep.at("pose").at("pos");
        const auto q = rep.at("pose").at("quat");
        std::cout << std::fixed << std::setprecision(4) << "pos mm: " << p[0].get<double>() << ", "
                  << p[1].get<double>() << ", " << p[2].get<double>() << "\nquat wxyz: " << q[0].get<double>() << ", "
                  << q[1].get<double>() << ", " << q[2].get<double>() << ", " << q[3].get<double>() << std::endl;
    });

    std::string solver_host = "127.0.0.1";
    int solver_port = 5005;
    auto* ik_serve = ik->add_subcommand("serve", "Serve the line-delimited JSON solver socket");
    ik_serve->add_option("--host", solver_host, "Bind address")->capture_default_str();
    ik_serve->add_option("--port", solver_port, "Port (0: any free port)")->capture_default_str();
    ik_serve->add_option("--config", kin_config, "Kinematics config (JSON)")->check(CLI::ExistingFile);
    ik_serve->callback([&] {
        const auto [dh, defaults] = load_kin();
        motion::SolverService svc(dh, defaults, solver_host, solver_port);
        const int port = svc.start();
        std::cout << "solver on " << solver_host << ":" << port << std::endl;
        wait_for_stop();
        svc.stop();
    });

    // proxy serve
    auto* proxy_cmd = app.add_subcommand("proxy", "Browser-facing proxy");
    proxy_cmd->require_subcommand(1);
    auto* proxy_serve = proxy_cmd->add_subcommand("serve", "Serve the proxy API for one controller until interrupted");
    ctl.add_to(proxy_serve);
    proxy::ProxyOptions popts;
    popts.port = 8000;
    int stream_period_ms = 50;
    std::string static_dir;
    proxy_serve->add_option("--host", popts.host, "Bind address")->capture_default_str();
    proxy_serve->add_option("--port", popts.port, "Port (0: any free port)")->capture_default_str();
    proxy_serve->add_option("--stream-period-ms", stream_period_ms, "Event stream cadence")->capture_default_str();
    proxy_serve->add_option("--static", static_dir, "Console bundle to serve at /")->check(CLI::ExistingDirectory);
    proxy_serve->add_option("--cors-origin", popts.cors_origin, "Access-Control-Allow-Origin")->capture_default_str();
    proxy_serve->callback([&] {
        popts.stream_period = std::chrono::milliseconds(stream_period_ms);
        if (!static_dir.empty()) popts.static_dir = static_dir;
        // the proxy also serves while the controller is down, so do not insist on a connection
        twin::Twin tw(ctl.options());
        tw.start();
        motion::MotionGateway gw(tw);
        proxy::Proxy px(tw, gw, popts);
        px.start();
        std::cout << "proxy on " << px.url() << " for " << tw.options().controller_url << std::endl;
        wait_for_stop();
        px.stop();
        tw.stop();
        std::cout << "stopped" << std::endl;
    });

    add_bench_commands(app, exit_code);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    } catch (const CommandFailed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    }
    return exit_code;
}
