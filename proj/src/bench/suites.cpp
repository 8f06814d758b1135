#include "dtwin/bench/bench.hpp"

#include "dtwin/emulator/service.hpp"
#include "dtwin/kinematics/kinematics.hpp"
#include "dtwin/wire/messages.hpp"

#include <httplib.h>

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

namespace dtwin::bench {

using nlohmann::ordered_json;
using namespace std::chrono_literals;

namespace {

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

// DH chain composed on plain arrays from the published IRB120 parameters.
using M4 = std::array<std::array<double, 4>, 4>;

M4 oracle_fk(const std::array<double, 6>& q) {
    const double pi = 3.14159265358979323846;
    const double off[6] = {0, -pi / 2, 0, 0, 0, 0};
    const double d[6] = {290, 0, 0, 302, 0, 72};
    const double a[6] = {0, 270, 70, 0, 0, 0};
    const double al[6] = {-pi / 2, 0, -pi / 2, pi / 2, -pi / 2, 0};
    M4 t{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};
    for (int i = 0; i < 6; ++i) {
        const double th = q[i] + off[i];
        const M4 l{{{std::cos(th), -std::sin(th) * std::cos(al[i]), std::sin(th) * std::sin(al[i]), a[i] * std::cos(th)},
                    {std::sin(th), std::cos(th) * std::cos(al[i]), -std::cos(th) * std::sin(al[i]), a[i] * std::sin(th)},
                    {0, std::sin(al[i]), std::cos(al[i]), d[i]},
                    {0, 0, 0, 1}}};
        M4 c{};
        for (int r = 0; r < 4; ++r)
            for (int k = 0; k < 4; ++k)
                for (int m = 0; m < 4; ++m) c[r][k] += t[r][m] * l[m][k];
        t = c;
    }
    return t;
}

kin::JointConfig random_in_limits(const kin::DhTable& dh, std::mt19937_64& rng) {
    kin::JointConfig q;
    for (std::size_t i = 0; i < kin::kJoints; ++i) {
        q[i] = std::uniform_real_distribution<double>(dh.limits[i].min, dh.limits[i].max)(rng);
    }
    return q;
}

kin::Mat6 fd_jacobian(const kin::DhTable& dh, const kin::JointConfig& q, double h) {
    kin::Mat6 j;
    const kin::Matrix3d r0t = kin::forward_kinematics(dh, q).rotation().transpose();
    for (std::size_t i = 0; i < kin::kJoints; ++i) {
        kin::JointConfig qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const kin::Pose p = kin::forward_kinematics(dh, qp);
        const kin::Pose m = kin::forward_kinematics(dh, qm);
        const auto c = static_cast<Eigen::Index>(i);
        j.block<3, 1>(0, c) = (p.position - m.position) / (2 * h);
        const kin::Matrix3d w = (p.rotation() - m.rotation()) / (2 * h) * r0t;
        j.block<3, 1>(3, c) = kin::Vector3d(w(2, 1), w(0, 2), w(1, 0));
    }
    return j;
}

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    std::uint64_t count() { return std::uniform_int_distribution<std::uint64_t>(0, 1ull << 53)(rng); }
    std::int64_t stamp() { return std::uniform_int_distribution<std::int64_t>(0, 4'000'000'000'000)(rng); }
    int bit() { return static_cast<int>(rng() & 1); }
    std::string word(std::size_t max_len) {
        static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ_0123456789 \"\\/:{}\t";
        std::string s;
        const std::size_t n = 1 + rng() % max_len;
        for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
        return s;
    }

    wire::JointTargetMsg joints() {
        wire::JointTargetMsg m;
        for (auto& j : m.joints) j = real(-400, 400);
        m.seq = count();
        m.timestamp_ms = stamp();
        return m;
    }
    wire::RobTargetMsg rob() {
        wire::RobTargetMsg m;
        m.x = real(-1000, 1000);
        m.y = real(-1000, 1000);
        m.z = real(-1000, 1000);
        double q[4] = {real(-1, 1), real(-1, 1), real(-1, 1), real(-1, 1)};
        const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]) + 1e-300;
        m.q1 = q[0] / n, m.q2 = q[1] / n, m.q3 = q[2] / n, m.q4 = q[3] / n;
        m.seq = count();
        m.timestamp_ms = stamp();
        return m;
    }
    wire::IoSnapshotMsg io() {
        wire::IoSnapshotMsg m;
        const int n = static_cast<int>(rng() % 20);
        for (int i = 0; i < n; ++i) {
            m.signals.push_back({"SIG_" + std::to_string(i), bit() ? wire::SignalKind::DI : wire::SignalKind::DO, bit()});
        }
        m.seq = count();
        m.timestamp_ms = stamp();
        return m;
    }
    wire::SpyLogMsg spy() {
        wire::SpyLogMsg m;
        std::uint64_t seq = rng() % 100;
        const int n = static_cast<int>(rng() % 10);
        for (int i = 0; i < n; ++i) {
            seq += 1 + rng() % 3;
            m.events.push_back({seq, stamp(), bit() ? wire::LogLevel::Info : wire::LogLevel::Warn, word(40)});
        }
        m.next_since = seq;
        return m;
    }
    wire::JogTargetMsg jog() {
        wire::JogTargetMsg m;
        for (auto& v : m.value) v = real(-180, 180);
        return m;
    }
};

// One check of a suite: recorded into the detail and folded into pass.
struct Checks {
    Result& r;
    std::vector<std::string> failed;

    void add(const std::string& name, bool ok, ordered_json value) {
        r.detail[name] = {{"pass", ok}, {"value", std::move(value)}};
        if (!ok) failed.push_back(name);
    }
    void finish(const std::string& summary) {
        r.pass = failed.empty();
        r.summary = summary;
        if (!failed.empty()) {
            r.summary += "; failed:";
            for (const auto& f : failed) r.summary += " " + f;
        }
    }
};

}  // namespace

Result kinematics_suite(std::uint64_t seed, const Progress& progress) {
    Result r;
    r.name = "kinematics";
    Checks c{r, {}};
    const kin::DhTable dh = kin::DhTable::irb120();
    std::mt19937_64 rng(seed);

    double worst_jac = 0;
    for (int n = 0; n < 100; ++n) {
        const kin::JointConfig q = random_in_limits(dh, rng);
        const kin::Mat6 j = kin::jacobian(dh, q);
        const kin::Mat6 fd = fd_jacobian(dh, q, 1e-6);
        for (int k = 0; k < 6; ++k) worst_jac = std::max(worst_jac, (j.col(k) - fd.col(k)).norm() / j.col(k).norm());
    }
    c.add("jacobian_fd_relative", worst_jac <= 1e-5, worst_jac);

    const kin::Pose home = kin::forward_kinematics(dh, kin::JointConfig{});
    const M4 o = oracle_fk({0, 0, 0, 0, 0, 0});
    const double home_err = (home.position - kin::Vector3d(o[0][3], o[1][3], o[2][3])).norm();
    c.add("home_vs_oracle_mm", home_err <= 1e-9, home_err);
    if (progress) progress("jacobian and home pose checked");

    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    int converged = 0;
    std::size_t objective_violations = 0, accepted_steps = 0;
    const int runs = 1000;
    for (int n = 0; n < runs; ++n) {
        const kin::JointConfig truth = random_in_limits(dh, rng);
        kin::IkProblem p;
        p.target = kin::forward_kinematics(dh, truth);
        p.seed = truth;
        for (std::size_t i = 0; i < kin::kJoints; ++i) p.seed[i] += jitter(rng);
        const kin::IkResult res = kin::solve_ik(dh, p);
        if (!res.converged) continue;
        ++converged;
        for (std::size_t k = 0; k + 1 < res.trace.size(); ++k) {
            ++accepted_steps;
            if (res.trace[k].objective > res.trace[k].objective_at_zero) ++objective_violations;
        }
    }
    const double rate = static_cast<double>(converged) / runs;
    c.add("ik_convergence_rate", rate >= 0.99, rate);
    c.add("lm_objective_increases", objective_violations == 0,
          {{"violations", objective_violations}, {"accepted_steps", accepted_steps}});
    if (progress) progress("ik converged " + std::to_string(converged) + " / " + std::to_string(runs));

    const kin::JointConfig near(kin::Vec6(0.2, 0.1, 0.1, 0.3, 1e-6, 0.2));
    kin::IkProblem p;
    p.target = kin::forward_kinematics(dh, near);
    p.target.position += kin::Vector3d(5, -3, 4);
    p.target.orientation = kin::Quaterniond(Eigen::AngleAxisd(0.05, kin::Vector3d::UnitY())) * p.target.orientation;
    double newton_norm = std::numeric_limits<double>::infinity();
    bool newton_threw = false;
    try {
        newton_norm = (kin::ik_step_newton(dh, near, p).q - near.q).norm();
    } catch (const kin::SingularJacobian&) {
        newton_threw = true;
    }
    const double lm_norm = (kin::ik_step_lm(dh, near, p).q - near.q).norm();
    c.add("singular_step", (newton_threw || newton_norm > 10.0) && lm_norm < 10.0,
          {{"newton_failed", newton_threw},
           {"newton_step_rad", newton_threw ? ordered_json(nullptr) : ordered_json(newton_norm)},
           {"lm_step_rad", lm_norm}});

    c.finish("jacobian " + sci(worst_jac) + " rel, home " + sci(home_err) + " mm, IK " + std::to_string(converged) +
             "/" + std::to_string(runs) + ", objective violations " + std::to_string(objective_violations) +
             ", LM step " + sci(lm_norm) + " rad vs Newton " +
             (newton_threw ? std::string("singular") : sci(newton_norm) + " rad"));
    return r;
}

Result protocol_suite(std::uint64_t seed, int cases, const Progress& progress) {
    Result r;
    r.name = "protocol";
    Checks c{r, {}};

    emu::EmulatorConfig cfg;
    cfg.credentials.nonce_lifetime = 1s;
    emu::Emulator emulator(cfg);
    const int port = emulator.start();
    httplib::Client http("127.0.0.1", port);
    const std::string uri(wire::path::kJointTarget);

    auto first = http.Get(uri);
    std::optional<wire::Challenge> ch;
    if (first) ch = wire::parse_challenge(first->get_header_value("WWW-Authenticate"));
    c.add("unauthenticated_401", first && first->status == 401 && ch.has_value(), first ? first->status : 0);

    int signed_status = 0, stale_status = 0;
    bool stale_flag = false;
    if (ch) {
        wire::DigestSession session(cfg.credentials, seed);
        session.accept_challenge(*ch);
        auto ok = http.Get(uri, {{"Authorization", session.authorization("GET", uri)}});
        signed_status = ok ? ok->status : 0;
        if (ok && ok->status == 200) {
            try {
                wire::decode_joint_target(ok->body);
            } catch (const std::exception&) {
                signed_status = -1;
            }
        }
        std::this_thread::sleep_for(1200ms);
        auto stale = http.Get(uri, {{"Authorization", session.authorization("GET", uri)}});
        if (stale) {
            stale_status = stale->status;
            const auto again = wire::parse_challenge(stale->get_header_value("WWW-Authenticate"));
            stale_flag = again && again->stale;
        }
    }
    c.add("signed_retry_200", signed_status == 200, signed_status);
    c.add("stale_nonce_401_stale", stale_status == 401 && stale_flag,
          {{"status", stale_status}, {"stale", stale_flag}});
    emulator.stop();
    if (progress) progress("auth exchange checked");

    Gen g(seed);
    int failures = 0;
    for (int n = 0; n < cases; ++n) {
        try {
            const auto j = g.joints();
            const auto rb = g.rob();
            const auto io = g.io();
            const auto s = g.spy();
            const auto jog = g.jog();
            const bool same = wire::decode_joint_target(wire::encode(j)) == j &&
                              wire::decode_rob_target(wire::encode(rb)) == rb &&
                              wire::decode_io_snapshot(wire::encode(io)) == io &&
                              wire::decode_spy_log(wire::encode(s)) == s &&
                              wire::decode_jog_target(wire::encode(jog)) == jog;
            if (!same) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    c.add("codec_round_trip_failures", failures == 0, {{"cases", cases}, {"failures", failures}});

    c.finish("401 challenge, signed " + std::to_string(signed_status) + ", stale " + std::to_string(stale_status) +
             (stale_flag ? " stale=true" : " stale missing") + ", codec " + std::to_string(cases) + " cases " +
             std::to_string(failures) + " failures");
    return r;
}

Result workcell_suite(std::uint64_t seed, int sequences, const Progress& progress) {
    Result r;
    r.name = "workcell";
    std::mt19937_64 rng(seed);
    const std::vector<std::string> io_names = {"DO_1", "DO_3", "DO_4", "DO_5", "DO_GRIP", "DO_CONVEYOR", "DI_IR", "DI_1",
                                               "NO_SUCH"};
    std::uint64_t ticks = 0, violations = 0, speed_violations = 0;
    double worst_speed_ratio = 0;
    std::string first_violation;
    std::array<std::uint64_t, 8> phases_seen{};

    for (int seq = 0; seq < sequences; ++seq) {
        emu::WorkcellConfig cfg;
        cfg.timings = {0.02, 0.04, 0.08, 0.02};
        cfg.speed_scale = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
        emu::Workcell w(cfg);
        const double dt = 1.0 / cfg.tick_hz;
        const int steps = std::uniform_int_distribution<int>(5, 25)(rng);
        for (int step = 0; step < steps; ++step) {
            switch (std::uniform_int_distribution<int>(0, 6)(rng)) {
                case 0: w.execution(emu::ExecutionAction::Start); break;
                case 1: w.execution(emu::ExecutionAction::Stop); break;
                case 2: w.execution(emu::ExecutionAction::ResetPP); break;
                case 3: {
                    std::array<double, 6> t{};
                    for (std::size_t i = 0; i < 6; ++i) {
                        const double lo = kin::rad2deg(cfg.dh.limits[i].min), hi = kin::rad2deg(cfg.dh.limits[i].max);
                        t[i] = std::uniform_real_distribution<double>(lo - 10, hi + 10)(rng);
                    }
                    w.update_jog_target(t);
                    break;
                }
                case 4:
                case 5:
                    w.set_io(io_names[std::uniform_int_distribution<std::size_t>(0, io_names.size() - 1)(rng)],
                             std::uniform_int_distribution<int>(0, 1)(rng));
                    break;
                default: break;
            }
            const int n = std::uniform_int_distribution<int>(0, 60)(rng);
            for (int t = 0; t < n; ++t) {
                const kin::JointConfig before = w.joints();
                w.tick();
                ++ticks;
                ++phases_seen[static_cast<std::size_t>(w.execution_state().phase)];
                if (const auto bad = w.check_invariants()) {
                    if (violations++ == 0) first_violation = *bad;
                }
                for (std::size_t i = 0; i < 6; ++i) {
                    const auto k = static_cast<Eigen::Index>(i);
                    const double limit = cfg.dh.speed_limits[i] * cfg.speed_scale * dt;
                    const double ratio = std::abs(w.joints().q[k] - before.q[k]) / limit;
                    worst_speed_ratio = std::max(worst_speed_ratio, ratio);
                    if (ratio > 1.0 + 1e-9) {
                        if (speed_violations++ == 0 && first_violation.empty()) {
                            first_violation = "joint " + std::to_string(i + 1) + " over its speed limit";
                        }
                    }
                }
                if (!cfg.dh.within_limits(w.joints(), 1e-12)) {
                    if (violations++ == 0) first_violation = "joint position outside its range";
                }
            }
        }
        if (progress && (seq + 1) % 2000 == 0) progress(std::to_string(seq + 1) + " sequences");
    }
    r.pass = violations == 0 && speed_violations == 0;
    r.detail["sequences"] = sequences;
    r.detail["ticks"] = ticks;
    r.detail["invariant_violations"] = violations;
    r.detail["speed_violations"] = speed_violations;
    r.detail["worst_speed_ratio"] = worst_speed_ratio;
    auto& ph = r.detail["ticks_per_phase"] = ordered_json::object();
    for (std::size_t i = 0; i < phases_seen.size(); ++i) {
        ph[std::string(emu::to_string(static_cast<emu::Phase>(i)))] = phases_seen[i];
    }
    if (!first_violation.empty()) r.detail["first_violation"] = first_violation;
    r.summary = std::to_string(sequences) + " sequences, " + std::to_string(ticks) + " ticks, " +
                std::to_string(violations) + " invariant and " + std::to_string(speed_violations) +
                " speed violations, peak joint speed " + std::to_string(worst_speed_ratio) + " of limit";
    return r;
}

}  // namespace dtwin::bench
