#pragma once

#include "dtwin/kinematics/dh_table.hpp"
#include "dtwin/kinematics/types.hpp"

#include <array>
#include <vector>

namespace dtwin::kin {

// Base-to-frame transforms: frames[0] is the base, frames[i] the frame after
// link i, frames[6] the TCP.
std::array<Isometry3d, kJoints + 1> link_frames(const DhTable& dh, const JointConfig& q);

Pose forward_kinematics(const DhTable& dh, const JointConfig& q);

// Geometric Jacobian. Rows 0-2: TCP linear velocity (mm/s), rows 3-5:
// angular velocity (rad/s), both in the base frame.
Mat6 jacobian(const DhTable& dh, const JointConfig& q);

// Rows 0-2: target - current position (mm). Rows 3-5: rotation vector of
// R_target * R_current^T (rad).
Vec6 task_residual(const Pose& target, const Pose& current);

struct IkProblem {
    Pose target;
    JointConfig seed;
    Vec6 weights_task = (Vec6() << 1.0, 1.0, 1.0, 100.0, 100.0, 100.0).finished();
    double damping_bias = 1e-3;
    double learning_rate = 1.0;
    double tol_pos = 0.01;       // mm
    double tol_orient = 1e-3;    // rad
    int max_iters = 200;

    void validate() const;
};

struct IkIterate {
    JointConfig q;
    double residual_norm = 0.0;       // sqrt(e^T W_E e) at q
    double best_residual_norm = 0.0;  // running minimum up to this iterate
    // Damped model value 1/2 r^T W_E r + 1/2 dq^T W_N dq for the step taken
    // from this iterate, and the same at dq = 0. Both zero on the last iterate.
    double objective = 0.0;
    double objective_at_zero = 0.0;
    double min_damping = 0.0;         // smallest diagonal entry of W_N
    double min_hessian_eig = 0.0;     // smallest eigenvalue of H_k
};

struct IkResult {
    JointConfig solution;
    bool converged = false;
    int iterations = 0;
    double pos_err = 0.0;     // mm
    double orient_err = 0.0;  // rad
    std::vector<IkIterate> trace;
};

// Everything one damped least-squares step computes at q_k.
struct LmStep {
    Vec6 residual;
    Mat6 jacobian;
    Mat6 hessian;
    Vec6 gradient;
    Vec6 damping;   // diagonal of W_N
    Vec6 delta;     // H^-1 g, before the learning rate is applied
};

LmStep lm_step_terms(const DhTable& dh, const JointConfig& q, const IkProblem& problem);

// Damped objective 1/2 r^T W_E r + 1/2 dq^T W_N dq with r = e - J dq.
double lm_objective(const LmStep& step, const Vec6& dq, const Vec6& weights_task);

// q_{k+1} = q_k + alpha H_k^-1 g_k. Not clamped.
JointConfig ik_step_lm(const DhTable& dh, const JointConfig& q_k, const IkProblem& problem);

// q_{k+1} = q_k + alpha J_k^-1 e_k. Throws SingularJacobian when J is
// numerically rank deficient.
JointConfig ik_step_newton(const DhTable& dh, const JointConfig& q_k, const IkProblem& problem);

IkResult solve_ik(const DhTable& dh, const IkProblem& problem);

}  // namespace dtwin::kin
