#include "dtwin/kinematics/dh_table.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dtwin::kin {

JointConfig JointConfig::from_degrees(std::span<const double> deg) {
    if (deg.size() != kJoints) {
        throw std::invalid_argument("expected 6 joint values, got " + std::to_string(deg.size()));
    }
    JointConfig out;
    for (std::size_t i = 0; i < kJoints; ++i) out[i] = deg2rad(deg[i]);
    return out;
}

std::array<double, kJoints> JointConfig::degrees() const {
    std::array<double, kJoints> out{};
    for (std::size_t i = 0; i < kJoints; ++i) out[i] = rad2deg((*this)[i]);
    return out;
}

Pose Pose::from_isometry(const Isometry3d& t) {
    Quaterniond q(t.rotation());
    q.normalize();
    return {t.translation(), q};
}

Isometry3d Pose::isometry() const {
    Isometry3d t = Isometry3d::Identity();
    t.linear() = orientation.normalized().toRotationMatrix();
    t.translation() = position;
    return t;
}

DhTable DhTable::irb120() {
    DhTable t;
    t.rows = {{
        {0.0, 290.0, 0.0, -kPi / 2},
        {-kPi / 2, 0.0, 270.0, 0.0},
        {0.0, 0.0, 70.0, -kPi / 2},
        {0.0, 302.0, 0.0, kPi / 2},
        {0.0, 0.0, 0.0, -kPi / 2},
        {0.0, 72.0, 0.0, 0.0},
    }};
    t.limits = {{
        {deg2rad(-165), deg2rad(165)},
        {deg2rad(-110), deg2rad(110)},
        {deg2rad(-110), deg2rad(70)},
        {deg2rad(-160), deg2rad(160)},
        {deg2rad(-120), deg2rad(120)},
        {deg2rad(-400), deg2rad(400)},
    }};
    t.speed_limits = {deg2rad(250), deg2rad(250), deg2rad(250),
                      deg2rad(320), deg2rad(320), deg2rad(420)};
    return t;
}

void DhTable::validate() const {
    for (std::size_t i = 0; i < kJoints; ++i) {
        const auto& r = rows[i];
        const std::string joint = "joint " + std::to_string(i + 1);
        if (!std::isfinite(r.theta_offset) || !std::isfinite(r.d) || !std::isfinite(r.a) ||
            !std::isfinite(r.alpha)) {
            throw std::invalid_argument(joint + ": non-finite DH parameter");
        }
        if (!(limits[i].min < limits[i].max)) {
            throw std::invalid_argument(joint + ": joint limit min must be below max");
        }
        if (!(speed_limits[i] > 0.0) || !std::isfinite(speed_limits[i])) {
            throw std::invalid_argument(joint + ": speed limit must be positive");
        }
    }
}

int DhTable::first_violation(const JointConfig& q) const {
    for (std::size_t i = 0; i < kJoints; ++i) {
        if (!std::isfinite(q[i]) || q[i] < limits[i].min || q[i] > limits[i].max) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

bool DhTable::within_limits(const JointConfig& q, double slack) const {
    for (std::size_t i = 0; i < kJoints; ++i) {
        if (!(q[i] >= limits[i].min - slack && q[i] <= limits[i].max + slack)) return false;
    }
    return true;
}

JointConfig DhTable::clamp(const JointConfig& q) const {
    JointConfig out = q;
    for (std::size_t i = 0; i < kJoints; ++i) {
        out[i] = std::clamp(q[i], limits[i].min, limits[i].max);
    }
    return out;
}

}  // namespace dtwin::kin
