#include "dtwin/kinematics/kinematics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace dtwin::kin {
namespace {

double weighted_norm(const Vec6& e, const Vec6& w) {
    return std::sqrt(e.dot(w.cwiseProduct(e)));
}

}  // namespace

void IkProblem::validate() const {
    if (!(weights_task.array() > 0.0).all() || !weights_task.allFinite()) {
        throw std::invalid_argument("task weights must be positive");
    }
    if (!(damping_bias > 0.0)) throw std::invalid_argument("damping_bias must be positive");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw std::invalid_argument("learning_rate must lie in (0, 1]");
    }
    if (!(tol_pos > 0.0) || !(tol_orient > 0.0)) {
        throw std::invalid_argument("tolerances must be positive");
    }
    if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    if (!seed.finite()) throw std::invalid_argument("seed is not finite");
    if (!target.position.allFinite() || !target.orientation.coeffs().allFinite() ||
        std::abs(target.orientation.norm() - 1.0) > 1e-6) {
        throw std::invalid_argument("target pose must be finite with a unit quaternion");
    }
}

LmStep lm_step_terms(const DhTable& dh, const JointConfig& q, const IkProblem& problem) {
    LmStep s;
    s.residual = task_residual(problem.target, forward_kinematics(dh, q));
    s.jacobian = jacobian(dh, q);
    const Vec6& w = problem.weights_task;
    // w_N,i = E_k + bias with E_k = 1/2 e^T W_E e
    const double energy = 0.5 * s.residual.dot(w.cwiseProduct(s.residual));
    s.damping = Vec6::Constant(energy + problem.damping_bias);
    s.hessian = s.jacobian.transpose() * w.asDiagonal() * s.jacobian;
    s.hessian.diagonal() += s.damping;
    s.gradient = s.jacobian.transpose() * w.cwiseProduct(s.residual);
    s.delta = s.hessian.llt().solve(s.gradient);
    if (!s.delta.allFinite() || !s.hessian.allFinite()) {
        throw NumericFailure("non-finite damped step", q.q);
    }
    return s;
}

double lm_objective(const LmStep& step, const Vec6& dq, const Vec6& weights_task) {
    const Vec6 r = step.residual - step.jacobian * dq;
    return 0.5 * r.dot(weights_task.cwiseProduct(r)) + 0.5 * dq.dot(step.damping.cwiseProduct(dq));
}

JointConfig ik_step_lm(const DhTable& dh, const JointConfig& q_k, const IkProblem& problem) {
    if (!q_k.finite()) throw std::invalid_argument("iterate is not finite");
    const LmStep s = lm_step_terms(dh, q_k, problem);
    return JointConfig(q_k.q + problem.learning_rate * s.delta);
}

JointConfig ik_step_newton(const DhTable& dh, const JointConfig& q_k, const IkProblem& problem) {
    if (!q_k.finite()) throw std::invalid_argument("iterate is not finite");
    const Vec6 e = task_residual(problem.target, forward_kinematics(dh, q_k));
    const Mat6 j = jacobian(dh, q_k);
    Eigen::JacobiSVD<Mat6> svd(j, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(5) <= 1e-12 * sv(0)) {
        throw SingularJacobian("Jacobian is singular at the current iterate");
    }
    const Vec6 dq = svd.solve(e);
    if (!dq.allFinite()) throw NumericFailure("non-finite Newton step", q_k.q);
    return JointConfig(q_k.q + problem.learning_rate * dq);
}

IkResult solve_ik(const DhTable& dh, const IkProblem& problem) {
    problem.validate();
    const Vec6& w = problem.weights_task;

    IkResult result;
    JointConfig q = dh.clamp(problem.seed);
    JointConfig best_q = q;
    double best_norm = std::numeric_limits<double>::infinity();
    double best_pos = 0.0, best_orient = 0.0;

    for (int k = 0;; ++k) {
        const LmStep s = lm_step_terms(dh, q, problem);
        const double pos_err = s.residual.head<3>().norm();
        const double orient_err = s.residual.tail<3>().norm();
        const double norm = weighted_norm(s.residual, w);
        if (!std::isfinite(norm)) throw NumericFailure("non-finite residual", q.q);
        if (norm < best_norm) {
            best_norm = norm;
            best_q = q;
            best_pos = pos_err;
            best_orient = orient_err;
        }

        IkIterate it;
        it.q = q;
        it.residual_norm = norm;
        it.best_residual_norm = best_norm;
        it.min_damping = s.damping.minCoeff();

        const bool done = pos_err <= problem.tol_pos && orient_err <= problem.tol_orient;
        if (done || k == problem.max_iters) {
            result.trace.push_back(it);
            result.converged = done;
            result.iterations = k;
            if (done) {
                best_q = q;
                best_pos = pos_err;
                best_orient = orient_err;
            }
            break;
        }

        Eigen::SelfAdjointEigenSolver<Mat6> eig(s.hessian, Eigen::EigenvaluesOnly);
        it.min_hessian_eig = eig.eigenvalues().minCoeff();

        const JointConfig next = dh.clamp(JointConfig(q.q + problem.learning_rate * s.delta));
        const Vec6 applied = next.q - q.q;
        it.objective = lm_objective(s, applied, w);
        it.objective_at_zero = lm_objective(s, Vec6::Zero(), w);
        result.trace.push_back(it);
        q = next;
    }

    result.solution = best_q;
    result.pos_err = best_pos;
    result.orient_err = best_orient;
    return result;
}

}  // namespace dtwin::kin
