#include <doctest.h>

#include "dtwin/kinematics/config.hpp"
#include "dtwin/kinematics/kinematics.hpp"

#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <random>

using namespace dtwin::kin;

namespace {

// Independent DH composition on plain row-major arrays. Shares nothing with
// the Eigen path in the library.
using M4 = std::array<std::array<double, 4>, 4>;

M4 mul(const M4& a, const M4& b) {
    M4 c{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

M4 oracle_fk(const std::array<double, 6>& q) {
    const double pi = 3.14159265358979323846;
    const double off[6] = {0, -pi / 2, 0, 0, 0, 0};
    const double d[6] = {290, 0, 0, 302, 0, 72};
    const double a[6] = {0, 270, 70, 0, 0, 0};
    const double al[6] = {-pi / 2, 0, -pi / 2, pi / 2, -pi / 2, 0};
    M4 t{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};
    for (int i = 0; i < 6; ++i) {
        const double th = q[i] + off[i];
        M4 link{{{std::cos(th), -std::sin(th) * std::cos(al[i]), std::sin(th) * std::sin(al[i]), a[i] * std::cos(th)},
                 {std::sin(th), std::cos(th) * std::cos(al[i]), -std::cos(th) * std::sin(al[i]), a[i] * std::sin(th)},
                 {0, std::sin(al[i]), std::cos(al[i]), d[i]},
                 {0, 0, 0, 1}}};
        t = mul(t, link);
    }
    return t;
}

JointConfig random_in_limits(const DhTable& dh, std::mt19937_64& rng, double margin = 0.0) {
    JointConfig q;
    for (std::size_t i = 0; i < kJoints; ++i) {
        std::uniform_real_distribution<double> u(dh.limits[i].min + margin, dh.limits[i].max - margin);
        q[i] = u(rng);
    }
    return q;
}

// Central-difference Jacobian of the FK map.
Mat6 fd_jacobian(const DhTable& dh, const JointConfig& q, double h) {
    Mat6 j;
    for (std::size_t i = 0; i < kJoints; ++i) {
        JointConfig qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const Pose p = forward_kinematics(dh, qp);
        const Pose m = forward_kinematics(dh, qm);
        const auto c = static_cast<Eigen::Index>(i);
        j.block<3, 1>(0, c) = (p.position - m.position) / (2 * h);
        const Matrix3d dr = (p.rotation() - m.rotation()) / (2 * h);
        const Matrix3d w = dr * forward_kinematics(dh, q).rotation().transpose();
        j.block<3, 1>(3, c) = Vector3d(w(2, 1), w(0, 2), w(1, 0));
    }
    return j;
}


}  // namespace

TEST_CASE("default table validates and the home pose matches the oracle") {
    const DhTable dh = DhTable::irb120();
    CHECK_NOTHROW(dh.validate());
    const Pose home = forward_kinematics(dh, JointConfig{});
    const M4 o = oracle_fk({0, 0, 0, 0, 0, 0});
    CHECK(std::abs(home.position.x() - 374.0) <= 1e-9);
    CHECK(std::abs(home.position.y() - 0.0) <= 1e-9);
    CHECK(std::abs(home.position.z() - 630.0) <= 1e-9);
    for (int r = 0; r < 3; ++r) {
        CHECK(std::abs(home.position[r] - o[r][3]) <= 1e-9);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(home.rotation()(r, c) - o[r][c]) <= 1e-12);
    }
}

TEST_CASE("forward kinematics agrees with the independent composition") {
    const DhTable dh = DhTable::irb120();
    SUBCASE("joint 1 at +90 deg rotates the home point about base z") {
        JointConfig q;
        q[0] = kPi / 2;
        const Pose p = forward_kinematics(dh, q);
        CHECK(std::abs(p.position.x()) < 1e-9);
        CHECK(std::abs(p.position.y() - 374.0) < 1e-9);
        CHECK(std::abs(p.position.z() - 630.0) < 1e-9);
    }
    SUBCASE("fixed configuration frozen from the python oracle") {
        JointConfig q(Vec6(0.1, -0.2, 0.3, 0.4, 0.5, 0.6));
        const Pose p = forward_kinematics(dh, q);
        CHECK(std::abs(p.position.x() - 310.6267255466248) < 1e-9);
        CHECK(std::abs(p.position.y() - 44.67631388556045) < 1e-9);
        CHECK(std::abs(p.position.z() - 556.1755717231003) < 1e-9);
    }
    SUBCASE("random configurations") {
        std::mt19937_64 rng(7);
        for (int n = 0; n < 200; ++n) {
            const JointConfig q = random_in_limits(dh, rng);
            const M4 o = oracle_fk({q[0], q[1], q[2], q[3], q[4], q[5]});
            const Pose p = forward_kinematics(dh, q);
            for (int r = 0; r < 3; ++r) CHECK(std::abs(p.position[r] - o[r][3]) < 1e-9);
            CHECK(std::abs(p.orientation.norm() - 1.0) < 1e-9);
        }
    }
    SUBCASE("non-finite input is rejected") {
        JointConfig q;
        q[2] = std::nan("");
        CHECK_THROWS_AS(forward_kinematics(dh, q), std::invalid_argument);
    }
}

TEST_CASE("jacobian matches central finite differences") {
    const DhTable dh = DhTable::irb120();
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const JointConfig q = random_in_limits(dh, rng);
        const Mat6 j = jacobian(dh, q);
        const Mat6 fd = fd_jacobian(dh, q, 1e-6);
        for (int c = 0; c < 6; ++c) {
            worst = std::max(worst, (j.col(c) - fd.col(c)).norm() / j.col(c).norm());
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("jacobian special configurations") {
    const DhTable dh = DhTable::irb120();
    SUBCASE("joint 1 rate at home moves the TCP along +y") {
        const Mat6 j = jacobian(dh, JointConfig{});
        CHECK(std::abs(j(0, 0)) < 1e-9);
        CHECK(std::abs(j(1, 0) - 374.0) < 1e-9);
        CHECK(std::abs(j(2, 0)) < 1e-9);
    }
    SUBCASE("wrist singularity at q5 = 0") {
        JointConfig q(Vec6(0.3, 0.2, -0.4, 0.7, 0.0, 0.1));
        Eigen::JacobiSVD<Mat6> svd(jacobian(dh, q));
        const auto sv = svd.singularValues();
        CHECK(sv(5) <= 1e-8 * sv(0));
    }
}

TEST_CASE("task residual") {
    const Pose cur(Vector3d(374, 0, 630), Quaterniond(Eigen::AngleAxisd(0.3, Vector3d::UnitY())));
    CHECK(task_residual(cur, cur).norm() == 0.0);

    const Vec6 t = task_residual(cur.translated(Vector3d(100, 0, 0)), cur);
    CHECK(std::abs(t[0] - 100.0) < 1e-12);
    CHECK(t.tail<5>().norm() < 1e-12);

    Pose rotated = cur;
    rotated.orientation = Quaterniond(Eigen::AngleAxisd(kPi / 2, Vector3d::UnitZ())) * cur.orientation;
    const Vec6 r = task_residual(rotated, cur);
    CHECK(r.head<5>().norm() < 1e-9);
    CHECK(std::abs(r[5] - kPi / 2) < 1e-9);

    // the sign of the quaternion must not matter
    Pose flipped = cur;
    flipped.orientation.coeffs() = -cur.orientation.coeffs();
    CHECK(task_residual(flipped, cur).norm() < 1e-12);
}

TEST_CASE("LM step") {
    const DhTable dh = DhTable::irb120();
    const Pose home = forward_kinematics(dh, JointConfig{});

    SUBCASE("zero residual leaves q unchanged") {
        IkProblem p;
        JointConfig q(Vec6(0.1, 0.2, -0.1, 0.3, 0.4, 0.5));
        p.target = forward_kinematics(dh, q);
        p.seed = q;
        CHECK(ik_step_lm(dh, q, p) == q);
    }
    SUBCASE("one step toward +1 mm x reduces the residual") {
        IkProblem p;
        p.target = home.translated(Vector3d(1, 0, 0));
        p.weights_task = Vec6::Ones();
        p.damping_bias = 1e-3;
        p.learning_rate = 1.0;
        const double before = task_residual(p.target, home).norm();
        const JointConfig next = ik_step_lm(dh, JointConfig{}, p);
        const double after = task_residual(p.target, forward_kinematics(dh, next)).norm();
        CHECK(after < before);
    }
    SUBCASE("bounded at the wrist singularity") {
        JointConfig q(Vec6(0.0, 0.1, 0.1, 0.2, 0.0, 0.0));
        IkProblem p;
        p.target = Pose(Vector3d(300, 150, 500), Quaterniond(Eigen::AngleAxisd(1.0, Vector3d::UnitX())));
        const LmStep s = lm_step_terms(dh, q, p);
        const double bound = s.gradient.norm() / s.damping.minCoeff();
        CHECK(s.delta.allFinite());
        CHECK(s.delta.norm() <= bound * (1 + 1e-12));
    }
}

TEST_CASE("Newton step") {
    const DhTable dh = DhTable::irb120();
    SUBCASE("zero residual") {
        JointConfig q(Vec6(0.1, 0.2, -0.1, 0.3, 0.4, 0.5));
        IkProblem p;
        p.target = forward_kinematics(dh, q);
        CHECK((ik_step_newton(dh, q, p).q - q.q).norm() < 1e-12);
    }
    SUBCASE("near the wrist singularity Newton blows up and LM does not") {
        JointConfig q(Vec6(0.2, 0.1, 0.1, 0.3, 1e-6, 0.2));
        IkProblem p;
        Pose target = forward_kinematics(dh, q);
        target.position += Vector3d(5, -3, 4);
        target.orientation = Quaterniond(Eigen::AngleAxisd(0.05, Vector3d::UnitY())) * target.orientation;
        p.target = target;
        bool newton_failed = false;
        try {
            const JointConfig n = ik_step_newton(dh, q, p);
            newton_failed = (n.q - q.q).norm() > 10.0;
        } catch (const SingularJacobian&) {
            newton_failed = true;
        }
        CHECK(newton_failed);
        const JointConfig lm = ik_step_lm(dh, q, p);
        CHECK((lm.q - q.q).norm() < 10.0);
    }
    SUBCASE("well conditioned small displacement: Newton equals LM in the undamped limit") {
        JointConfig q(Vec6(0.2, 0.1, 0.2, 0.3, 0.8, 0.2));
        Pose target = forward_kinematics(dh, q);
        target.position += Vector3d(1e-3, -1e-3, 2e-3);
        IkProblem p;
        p.target = target;
        p.damping_bias = 1e-12;
        const JointConfig n = ik_step_newton(dh, q, p);
        const JointConfig l = ik_step_lm(dh, q, p);
        CHECK((n.q - l.q).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("solve_ik") {
    const DhTable dh = DhTable::irb120();
    const Pose home = forward_kinematics(dh, JointConfig{});

    SUBCASE("target equal to FK(seed) converges immediately") {
        IkProblem p;
        p.seed = JointConfig(Vec6(0.1, -0.3, 0.2, 0.4, 0.6, -0.2));
        p.target = forward_kinematics(dh, p.seed);
        const IkResult r = solve_ik(dh, p);
        CHECK(r.converged);
        CHECK(r.iterations <= 1);
        CHECK(r.solution == p.seed);
    }
    SUBCASE("home plus 100 mm along x") {
        IkProblem p;
        p.target = home.translated(Vector3d(100, 0, 0));
        const IkResult r = solve_ik(dh, p);
        REQUIRE(r.converged);
        const Pose reached = forward_kinematics(dh, r.solution);
        CHECK((reached.position - Vector3d(474, 0, 630)).norm() <= 0.01);
        CHECK(r.orient_err <= 1e-3);
        CHECK(dh.within_limits(r.solution));
    }
    SUBCASE("unreachable target") {
        IkProblem p;
        p.target = Pose(Vector3d(1200, 0, 300), home.orientation);
        p.max_iters = 100;
        const IkResult r = solve_ik(dh, p);
        CHECK_FALSE(r.converged);
        CHECK(r.iterations == 100);
        for (std::size_t k = 1; k < r.trace.size(); ++k) {
            CHECK(r.trace[k].best_residual_norm <= r.trace[k - 1].best_residual_norm);
        }
        CHECK(dh.within_limits(r.solution));
    }
    SUBCASE("invalid problems are rejected") {
        IkProblem p;
        p.learning_rate = 0.0;
        CHECK_THROWS_AS(solve_ik(dh, p), std::invalid_argument);
        p = IkProblem{};
        p.max_iters = 0;
        CHECK_THROWS_AS(solve_ik(dh, p), std::invalid_argument);
        p = IkProblem{};
        p.weights_task[3] = 0.0;
        CHECK_THROWS_AS(solve_ik(dh, p), std::invalid_argument);
    }
}

TEST_CASE("solve_ik properties over FK-generated targets") {
    const DhTable dh = DhTable::irb120();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    int converged = 0;
    const int runs = 1000;
    for (int n = 0; n < runs; ++n) {
        const JointConfig truth = random_in_limits(dh, rng);
        JointConfig seed = truth;
        for (std::size_t i = 0; i < kJoints; ++i) seed[i] += jitter(rng);
        IkProblem p;
        p.target = forward_kinematics(dh, truth);
        p.seed = seed;
        const IkResult r = solve_ik(dh, p);
        if (!r.converged) continue;
        ++converged;
        // round trip
        const Vec6 e = task_residual(p.target, forward_kinematics(dh, r.solution));
        CHECK(e.head<3>().norm() <= p.tol_pos);
        CHECK(e.tail<3>().norm() <= p.tol_orient);
        for (std::size_t k = 0; k + 1 < r.trace.size(); ++k) {
            const auto& it = r.trace[k];
            CHECK(std::isfinite(it.residual_norm));
            CHECK(it.objective <= it.objective_at_zero);
            CHECK(it.min_hessian_eig >= it.min_damping * (1 - 1e-9));
        }
    }
    MESSAGE("converged " << converged << " / " << runs);
    CHECK(converged >= 990);
}

TEST_CASE("solve_ik is deterministic") {
    const DhTable dh = DhTable::irb120();
    IkProblem p;
    p.target = forward_kinematics(dh, JointConfig(Vec6(0.4, 0.3, -0.5, 1.0, 0.7, -0.4)));
    p.seed = JointConfig(Vec6(0.3, 0.2, -0.4, 0.9, 0.6, -0.3));
    const IkResult a = solve_ik(dh, p);
    const IkResult b = solve_ik(dh, p);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].q == b.trace[k].q);
        CHECK(a.trace[k].residual_norm == b.trace[k].residual_norm);
        CHECK(a.trace[k].objective == b.trace[k].objective);
    }
}

TEST_CASE("config round trip keeps the table") {
    const DhTable dh = DhTable::irb120();
    const DhTable back = dh_table_from_json(dh_table_to_json(dh));
    for (std::size_t i = 0; i < kJoints; ++i) {
        CHECK(back.rows[i].d == doctest::Approx(dh.rows[i].d));
        CHECK(back.rows[i].alpha == doctest::Approx(dh.rows[i].alpha));
        CHECK(back.limits[i].max == doctest::Approx(dh.limits[i].max));
        CHECK(back.speed_limits[i] == doctest::Approx(dh.speed_limits[i]));
    }
    nlohmann::json bad = {{"joint_limits_deg", {{10, -10}, {0, 1}, {0, 1}, {0, 1}, {0, 1}, {0, 1}}}};
    CHECK_THROWS_WITH_AS(dh_table_from_json(bad), doctest::Contains("joint 1"), std::invalid_argument);
    const auto sd = solver_defaults_from_json({{"solver", {{"tol_pos_mm", 0.5}, {"max_iters", 20}}}});
    CHECK(sd.tol_pos == 0.5);
    CHECK(sd.max_iters == 20);
}
