#include "dtwin/kinematics/kinematics.hpp"

#include <cmath>

namespace dtwin::kin {
namespace {

Isometry3d dh_transform(const DhRow& row, double joint) {
    const double th = joint + row.theta_offset;
    const double ct = std::cos(th), st = std::sin(th);
    const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
    Isometry3d t = Isometry3d::Identity();
    t.linear() << ct, -st * ca, st * sa,
                  st, ct * ca, -ct * sa,
                  0.0, sa, ca;
    t.translation() << row.a * ct, row.a * st, row.d;
    return t;
}

void require_finite(const JointConfig& q) {
    if (!q.finite()) throw std::invalid_argument("joint configuration is not finite");
}

}  // namespace

std::array<Isometry3d, kJoints + 1> link_frames(const DhTable& dh, const JointConfig& q) {
    require_finite(q);
    std::array<Isometry3d, kJoints + 1> frames;
    frames[0] = Isometry3d::Identity();
    for (std::size_t i = 0; i < kJoints; ++i) {
        frames[i + 1] = frames[i] * dh_transform(dh.rows[i], q[i]);
    }
    return frames;
}

Pose forward_kinematics(const DhTable& dh, const JointConfig& q) {
    return Pose::from_isometry(link_frames(dh, q).back());
}

Mat6 jacobian(const DhTable& dh, const JointConfig& q) {
    const auto frames = link_frames(dh, q);
    const Vector3d tcp = frames.back().translation();
    Mat6 j;
    for (std::size_t i = 0; i < kJoints; ++i) {
        // joint i rotates about z of the preceding frame
        const Vector3d axis = frames[i].linear().col(2);
        const Vector3d origin = frames[i].translation();
        const auto c = static_cast<Eigen::Index>(i);
        j.block<3, 1>(0, c) = axis.cross(tcp - origin);
        j.block<3, 1>(3, c) = axis;
    }
    return j;
}

Vec6 task_residual(const Pose& target, const Pose& current) {
    Vec6 e;
    e.head<3>() = target.position - current.position;

    Quaterniond rel = target.orientation.normalized() * current.orientation.normalized().conjugate();
    if (rel.w() < 0.0) rel.coeffs() = -rel.coeffs();
    const Vector3d v = rel.vec();
    const double s = v.norm();
    if (s < 1e-15) {
        e.tail<3>() = 2.0 * v;
    } else {
        e.tail<3>() = (2.0 * std::atan2(s, rel.w()) / s) * v;
    }
    return e;
}

}  // namespace dtwin::kin
