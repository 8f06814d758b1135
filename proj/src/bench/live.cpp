#include "dtwin/bench/bench.hpp"

#include "dtwin/emulator/service.hpp"
#include "dtwin/motion/gateway.hpp"
#include "dtwin/motion/solver_service.hpp"
#include "dtwin/twin/twin.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dtwin::bench {

using nlohmann::ordered_json;
using namespace std::chrono_literals;

std::atomic<bool> g_interrupted{false};

namespace {

constexpr std::array<twin::Stream, 3> kPolled = {twin::Stream::Joints, twin::Stream::Tcp, twin::Stream::Io};

std::string fixed(double v, int digits = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

// Emulator plus twin on loopback.
struct Rig {
    emu::Emulator emulator;
    std::unique_ptr<twin::Twin> tw;

    explicit Rig(emu::EmulatorConfig cfg, std::size_t stats_history = 120) : emulator(std::move(cfg)) {
        emulator.start();
        twin::TwinOptions o;
        o.controller_url = emulator.url();
        o.credentials = emulator.config().credentials;
        o.stats_history = stats_history;
        tw = std::make_unique<twin::Twin>(o);
        tw->start();
        const bool up = tw->wait_until(
            [](const twin::TwinState& s) {
                return s.connection == twin::ConnectionState::Up && s.joints && s.tcp && s.io;
            },
            5s);
        if (!up) throw std::runtime_error("twin did not connect to the loopback emulator");
    }
    ~Rig() {
        tw->stop();
        emulator.stop();
    }
};

// Sleeps in short steps; false when interrupted.
bool pause(std::chrono::milliseconds d) {
    const auto until = std::chrono::steady_clock::now() + d;
    while (std::chrono::steady_clock::now() < until) {
        if (g_interrupted) return false;
        std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
            50ms, until - std::chrono::steady_clock::now()));
    }
    return !g_interrupted;
}

void say(const Progress& p, const std::string& msg) {
    if (p) p(msg);
}

struct Interval {
    std::int64_t start_ms;
    std::int64_t end_ms;
};

// RECOGNIZE phases from the controller's spy log, in controller epoch ms.
std::vector<Interval> recognize_intervals(const wire::SpyLogMsg& log) {
    std::vector<Interval> out;
    bool open = false;
    std::int64_t since = 0;
    for (const auto& e : log.events) {
        if (e.text.rfind("PHASE ", 0) != 0) continue;
        const bool rec = e.text.rfind("PHASE RECOGNIZE", 0) == 0;
        if (rec && !open) {
            open = true;
            since = e.timestamp_ms;
        } else if (!rec && open) {
            out.push_back({since, e.timestamp_ms});
            open = false;
        }
    }
    return out;
}

bool overlaps(const twin::RefreshWindow& w, const Interval& i) { return w.start_ms < i.end_ms && i.start_ms < w.end_ms; }

double mean_period(const std::vector<twin::RefreshWindow>& ws) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& w : ws) {
        if (w.warm_up) continue;
        sum += w.period_ms;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : std::nan("");
}

}  // namespace

ordered_json to_json(const StreamSummary& s) {
    return {{"stream", s.stream},
            {"windows", s.windows},
            {"warm_up", s.warm_up},
            {"mean_period_ms", s.mean_period_ms},
            {"max_period_ms", s.max_period_ms},
            {"worst_identity_error", s.worst_identity_error}};
}

StreamSummary summarize(const std::string& stream, const std::vector<twin::RefreshWindow>& windows) {
    StreamSummary s;
    s.stream = stream;
    s.windows = windows.size();
    s.mean_period_ms = mean_period(windows);
    for (const auto& w : windows) {
        if (w.warm_up) ++s.warm_up;
        s.worst_identity_error = std::max(s.worst_identity_error, std::abs(w.period_ms * w.window_count - 1000.0));
        if (!w.warm_up) s.max_period_ms = std::max(s.max_period_ms, w.max_period_ms);
    }
    return s;
}

Result refresh(const RefreshOptions& opts, const Progress& progress) {
    Result r;
    r.name = "refresh";
    emu::EmulatorConfig cfg;
    cfg.camera_delay_ms = opts.camera_delay_ms;
    const auto seconds = opts.duration.count();
    Rig rig(cfg, static_cast<std::size_t>(seconds) + 10);

    say(progress, "polling for " + std::to_string(seconds) + " s");
    for (std::int64_t s = 1; s <= seconds; ++s) {
        if (!pause(1s)) break;
        if (s % 10 == 0) say(progress, std::to_string(s) + " s");
    }
    rig.tw->roll_meters();
    rig.tw->stop();

    bool ok = !g_interrupted;
    auto& streams = r.detail["streams"] = ordered_json::array();
    std::ostringstream sum;
    for (twin::Stream st : twin::kStreams) {
        const auto name = std::string(twin::to_string(st));
        const auto s = summarize(name, rig.tw->meter(st).windows());
        streams.push_back(to_json(s));
        if (st == twin::Stream::SpyLog) continue;
        const double limit = st == twin::Stream::Io ? opts.max_io_ms : opts.max_joints_ms;
        const bool good = s.windows > s.warm_up && s.mean_period_ms <= limit && s.worst_identity_error <= 1.0;
        ok = ok && good;
        sum << name << " " << fixed(s.mean_period_ms) << " ms (<= " << limit << "), ";
    }
    r.detail["duration_s"] = seconds;
    r.pass = ok;
    sum << "identity within 1";
    if (g_interrupted) sum << ", interrupted";
    r.summary = sum.str();
    return r;
}

Result camera_dip(const CameraOptions& opts, const Progress& progress) {
    Result r;
    r.name = "camera";
    emu::EmulatorConfig cfg;
    cfg.camera_delay_ms = opts.camera_delay_ms;
    Rig rig(cfg, 300);

    say(progress, "idle baseline for " + std::to_string(opts.idle.count()) + " s");
    pause(opts.idle);
    rig.tw->roll_meters();
    std::map<twin::Stream, std::vector<twin::RefreshWindow>> idle;
    for (twin::Stream st : kPolled) idle[st] = rig.tw->meter(st).windows();
    const auto idle_end_index = idle[twin::Stream::Joints].size();

    const auto started = rig.emulator.execution(emu::ExecutionAction::Start);
    if (!started.ok()) throw std::runtime_error("program did not start: " + started.error.message);
    say(progress, "running " + std::to_string(opts.cycles) + " cycles with a " +
                      std::to_string(opts.camera_delay_ms) + " ms camera");
    const auto cycles = static_cast<std::uint64_t>(opts.cycles);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60 * cycles);
    while (rig.emulator.snapshot()->exec.cycle_count < cycles && std::chrono::steady_clock::now() < deadline) {
        if (!pause(200ms)) break;
    }
    const bool completed = rig.emulator.snapshot()->exec.cycle_count >= cycles;
    // let the window holding the last phase change close
    pause(1100ms);
    rig.emulator.execution(emu::ExecutionAction::Stop);
    rig.tw->roll_meters();
    const auto intervals = recognize_intervals(rig.emulator.spylog(0));

    bool ok = completed && !g_interrupted && static_cast<int>(intervals.size()) >= opts.cycles;
    auto& per_stream = r.detail["streams"] = ordered_json::array();
    double worst_spike = std::numeric_limits<double>::infinity();
    double worst_recovery = 0;
    for (twin::Stream st : kPolled) {
        const auto all = rig.tw->meter(st).windows();
        const double idle_mean = mean_period(idle[st]);
        ordered_json js;
        js["stream"] = twin::to_string(st);
        js["idle_mean_ms"] = idle_mean;
        auto& spikes = js["recognize_max_ms"] = ordered_json::array();
        for (const auto& iv : intervals) {
            double m = 0;
            for (const auto& w : all) {
                if (overlaps(w, iv)) m = std::max(m, w.max_period_ms);
            }
            spikes.push_back(m);
            const double ratio = m / idle_mean;
            worst_spike = std::min(worst_spike, ratio);
            ok = ok && ratio >= opts.spike_factor;
        }
        std::vector<twin::RefreshWindow> after;
        if (!intervals.empty()) {
            for (std::size_t i = std::min(idle_end_index, all.size()); i < all.size(); ++i) {
                const auto& w = all[i];
                if (w.start_ms < intervals.front().start_ms) continue;
                if (std::none_of(intervals.begin(), intervals.end(), [&](const Interval& iv) { return overlaps(w, iv); })) {
                    after.push_back(w);
                }
            }
        }
        const double after_mean = mean_period(after);
        js["after_windows"] = after.size();
        js["after_mean_ms"] = after_mean;
        const double ratio = after_mean / idle_mean;
        worst_recovery = std::max(worst_recovery, ratio);
        ok = ok && !after.empty() && ratio <= opts.recovery_factor;
        per_stream.push_back(std::move(js));
    }
    auto& ivs = r.detail["recognize_ms"] = ordered_json::array();
    for (const auto& iv : intervals) ivs.push_back({iv.start_ms, iv.end_ms});
    r.detail["cycles_completed"] = rig.emulator.snapshot()->exec.cycle_count;
    r.pass = ok;
    r.summary = std::to_string(intervals.size()) + " recognize phases, spike >= " + fixed(worst_spike, 1) +
                "x idle (need " + fixed(opts.spike_factor, 1) + "x), after <= " + fixed(worst_recovery, 2) +
                "x idle (need " + fixed(opts.recovery_factor, 2) + "x)";
    if (!completed) r.summary += ", cycles did not complete";
    return r;
}

Result linear_repeat(const LinearOptions& opts, const Progress& progress) {
    Result r;
    r.name = "linear";
    emu::EmulatorConfig cfg;
    Rig rig(cfg);
    motion::MotionGateway gw(*rig.tw);
    const auto& dh = rig.tw->options().dh;
    const kin::Pose home = kin::forward_kinematics(dh, kin::JointConfig{});
    const kin::Pose goal = home.translated({opts.dx_mm, 0, 0});

    int done = 0;
    double worst = 0;
    auto& reps = r.detail["repetitions"] = ordered_json::array();
    for (int i = 0; i < opts.repetitions && !g_interrupted; ++i) {
        auto back = gw.wait(gw.jog({motion::JogCommand::Mode::Absolute, {0, 0, 0, 0, 0, 0}}).id, 10s);
        if (!back || back->status != motion::TicketStatus::Done) {
            reps.push_back({{"index", i}, {"status", "home failed"}});
            continue;
        }
        // the gateway seeds IK from a fresh joints sample
        const auto v = rig.tw->state().version;
        rig.tw->wait_change(v, 200ms);
        std::optional<motion::Ticket> t;
        try {
            t = gw.wait(gw.linear_move({opts.dx_mm, 0, 0, true}).id, 10s);
        } catch (const motion::GatewayError& e) {
            reps.push_back({{"index", i}, {"status", "rejected"}, {"reason", e.what()}});
            continue;
        }
        // TCP as the controller reports it once the motion settled
        const auto settled = twin::SteadyClock::now();
        rig.tw->wait_until([&](const twin::TwinState& st) { return st.tcp && st.tcp->received > settled; }, 500ms);
        const auto s = rig.tw->state();
        const double err = s.tcp ? (s.tcp->pose.position - goal.position).norm() : std::nan("");
        const bool good = t && t->status == motion::TicketStatus::Done && err <= opts.tol_mm;
        if (good) ++done;
        worst = std::max(worst, std::isnan(err) ? std::numeric_limits<double>::infinity() : err);
        reps.push_back({{"index", i},
                        {"status", t ? std::string(motion::to_string(t->status)) : "lost"},
                        {"tcp_err_mm", err},
                        {"ik_err_mm", t && t->final_pos_err_mm ? *t->final_pos_err_mm : std::nan("")},
                        {"elapsed_ms", t && t->elapsed_ms ? *t->elapsed_ms : std::nan("")}});
        if ((i + 1) % 10 == 0) say(progress, std::to_string(i + 1) + " / " + std::to_string(opts.repetitions));
    }
    r.pass = done == opts.repetitions;
    r.detail["done"] = done;
    r.detail["worst_tcp_err_mm"] = worst;
    r.summary = std::to_string(done) + "/" + std::to_string(opts.repetitions) + " done, worst TCP error " +
                sci(worst) + " mm (<= " + sci(opts.tol_mm) + ")";
    return r;
}

Result trajectory(const TrajectoryOptions& opts, const Progress& progress) {
    Result r;
    r.name = "trajectory";
    emu::EmulatorConfig cfg;
    Rig rig(cfg);
    motion::SolverService solver(rig.tw->options().dh, kin::SolverDefaults{});
    const int solver_port = solver.start();
    motion::SolverClient sc("127.0.0.1", solver_port);

    auto& rec = rig.tw->recorder();
    rec.clear();
    rec.start();
    say(progress, "recording one stacking cycle");
    rig.emulator.execution(emu::ExecutionAction::Start);
    const auto deadline = std::chrono::steady_clock::now() + 60s;
    while (rig.emulator.snapshot()->exec.cycle_count < 1 && std::chrono::steady_clock::now() < deadline) {
        if (!pause(100ms)) break;
    }
    const bool completed = rig.emulator.snapshot()->exec.cycle_count >= 1;
    pause(100ms);
    rec.stop();
    rig.emulator.execution(emu::ExecutionAction::Stop);

    const auto rows = rec.rows();
    const auto tcp_rows = rec.tcp_rows();
    const auto emu_log = rig.emulator.trajectory_log();

    // FK(joint log) against the robtarget log and the solver's FK, aligned on t_ms
    std::map<std::int64_t, const twin::TcpRow*> tcp_at;
    for (const auto& t : tcp_rows) tcp_at[t.t_ms] = &t;
    std::size_t aligned = 0;
    double worst_tcp = 0, worst_solver = 0;
    for (const auto& row : rows) {
        const kin::Pose remote = sc.fk(row.q);
        worst_solver = std::max(worst_solver, (remote.position - row.pose.position).norm());
        auto it = tcp_at.find(row.t_ms);
        if (it == tcp_at.end()) continue;
        ++aligned;
        worst_tcp = std::max(worst_tcp, (it->second->pose.position - row.pose.position).norm());
    }

    // the three FK paths on the controller's own joint values
    twin::TrajectoryRecorder probe(rig.tw->options().dh);
    probe.start();
    double worst_internal = 0;
    std::size_t internal = 0;
    for (std::size_t i = 0; i < emu_log.size(); i += 5) {
        const auto& s = emu_log[i];
        probe.clear();
        probe.on_joints(s.tick, s.timestamp_ms, s.q);
        const kin::Pose twin_fk = probe.rows().front().pose;
        const kin::Pose socket_fk = sc.fk(s.q);
        worst_internal = std::max({worst_internal, (twin_fk.position - s.tcp.position).norm(),
                                   (socket_fk.position - s.tcp.position).norm(),
                                   (socket_fk.position - twin_fk.position).norm()});
        ++internal;
    }
    solver.stop();

    r.detail["cycle_completed"] = completed;
    r.detail["joint_rows"] = rows.size();
    r.detail["tcp_rows"] = tcp_rows.size();
    r.detail["aligned_rows"] = aligned;
    r.detail["worst_fk_vs_robtarget_mm"] = worst_tcp;
    r.detail["worst_fk_vs_solver_mm"] = worst_solver;
    r.detail["internal_samples"] = internal;
    r.detail["worst_internal_mm"] = worst_internal;
    r.pass = completed && !g_interrupted && aligned > 100 && internal > 100 && worst_tcp <= opts.tol_aligned_mm &&
             worst_solver <= opts.tol_aligned_mm && worst_internal <= opts.tol_internal_mm;
    r.summary = std::to_string(aligned) + " aligned rows, FK vs robtarget " + sci(worst_tcp) + " mm, FK vs solver " +
                sci(worst_solver) + " mm (<= " + sci(opts.tol_aligned_mm) + "), internal paths " +
                sci(worst_internal) + " mm over " + std::to_string(internal) + " q (<= " + sci(opts.tol_internal_mm) +
                ")";
    if (!completed) r.summary += ", cycle did not complete";
    return r;
}

}  // namespace dtwin::bench
