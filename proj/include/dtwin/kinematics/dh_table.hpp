#pragma once

#include "dtwin/kinematics/types.hpp"

#include <array>

namespace dtwin::kin {

// Standard (distal) Denavit-Hartenberg parameters of one link.
// Lengths in mm, angles in rad.
struct DhRow {
    double theta_offset = 0.0;
    double d = 0.0;
    double a = 0.0;
    double alpha = 0.0;
};

struct JointLimit {
    double min = 0.0;
    double max = 0.0;
};

class DhTable {
  public:
    std::array<DhRow, kJoints> rows{};
    std::array<JointLimit, kJoints> limits{};
    std::array<double, kJoints> speed_limits{};  // rad/s

    // ABB IRB120 standard table with vendor joint and speed limits.
    static DhTable irb120();

    // Throws std::invalid_argument naming the offending joint.
    void validate() const;

    bool within_limits(const JointConfig& q, double slack = 0.0) const;
    JointConfig clamp(const JointConfig& q) const;

    // Index of the first joint outside its range, or -1.
    int first_violation(const JointConfig& q) const;
};

}  // namespace dtwin::kin
