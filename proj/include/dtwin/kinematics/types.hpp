#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace dtwin::kin {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Eigen::Isometry3d;
using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector3d;

inline constexpr std::size_t kJoints = 6;
inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Raised when the solver hits a NaN/Inf intermediate. Carries the iterate
// that produced it.
class NumericFailure : public std::runtime_error {
  public:
    NumericFailure(const std::string& what, Vec6 at)
        : std::runtime_error(what), iterate_(at) {}
    const Vec6& iterate() const { return iterate_; }

  private:
    Vec6 iterate_;
};

class SingularJacobian : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Joint angles in radians, joint 1 first.
struct JointConfig {
    Vec6 q = Vec6::Zero();

    JointConfig() = default;
    explicit JointConfig(const Vec6& v) : q(v) {}

    static JointConfig from_degrees(std::span<const double> deg);
    std::array<double, kJoints> degrees() const;

    double operator[](std::size_t i) const { return q[static_cast<Eigen::Index>(i)]; }
    double& operator[](std::size_t i) { return q[static_cast<Eigen::Index>(i)]; }

    bool finite() const { return q.allFinite(); }
    bool operator==(const JointConfig& other) const { return q == other.q; }
};

// TCP pose: position in mm, unit quaternion orientation.
struct Pose {
    Vector3d position = Vector3d::Zero();
    Quaterniond orientation = Quaterniond::Identity();

    Pose() = default;
    Pose(const Vector3d& p, const Quaterniond& o) : position(p), orientation(o) {}

    static Pose from_isometry(const Isometry3d& t);
    Isometry3d isometry() const;
    Matrix3d rotation() const { return orientation.toRotationMatrix(); }

    // Returns a copy translated by `delta` mm in the base frame.
    Pose translated(const Vector3d& delta) const { return {position + delta, orientation}; }
};

}  // namespace dtwin::kin
