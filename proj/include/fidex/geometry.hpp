#pragma once

/// @file
/// SO(3) / SE(3) algebra: rotations, rigid transforms, twists, exp/log and
/// the weighted pose distance used by the estimator.
///
/// Twists are ordered (rotation; translation): the first three coordinates are
/// the rotation vector in radians, the last three the translational part in
/// meters.

#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fidex/error.hpp"

namespace fidex {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Twist = Eigen::Matrix<double, 6, 1>;

/// Below this rotation angle (rad) closed forms switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-7;
/// log() refuses rotation angles within this margin of pi.
inline constexpr double kLogBranchMargin = 1e-6;
/// Default rotation weight of se3_distance, in meters per radian.
inline constexpr double kDefaultRotWeight = 0.1;

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

namespace detail {

// Coefficient of K^2 in both V^-1 and the inverse right Jacobian:
// (1 - (t/2) cot(t/2)) / t^2.
inline double inv_jacobian_k2_coeff(double theta) {
  const double half = 0.5 * theta;
  return (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
}

inline Mat3 left_jacobian_general(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = hat(omega);
  const double s = std::sin(0.5 * theta);
  const double a = 2.0 * s * s / (theta * theta);  // (1 - cos t) / t^2
  const double b = (theta - std::sin(theta)) / (theta * theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

inline Mat3 left_jacobian_taylor(const Vec3& omega) {
  const Mat3 k = hat(omega);
  return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
}

inline Mat3 left_jacobian_inverse_general(const Vec3& omega) {
  const Mat3 k = hat(omega);
  return Mat3::Identity() - 0.5 * k + inv_jacobian_k2_coeff(omega.norm()) * k * k;
}

inline Mat3 left_jacobian_inverse_taylor(const Vec3& omega) {
  const Mat3 k = hat(omega);
  return Mat3::Identity() - 0.5 * k + (1.0 / 12.0) * k * k;
}

inline Eigen::Quaterniond so3_exp_general(const Vec3& omega) {
  const double theta = omega.norm();
  const double half = 0.5 * theta;
  const Vec3 v = (std::sin(half) / theta) * omega;
  return Eigen::Quaterniond(std::cos(half), v.x(), v.y(), v.z());
}

inline Eigen::Quaterniond so3_exp_taylor(const Vec3& omega) {
  const double t2 = omega.squaredNorm();
  const Vec3 v = (0.5 - t2 / 48.0) * omega;
  return Eigen::Quaterniond(1.0 - t2 / 8.0, v.x(), v.y(), v.z()).normalized();
}

}  // namespace detail

/// Left Jacobian of SO(3), V(omega); maps twist translation to SE(3) translation.
inline Mat3 so3_left_jacobian(const Vec3& omega) {
  return omega.norm() < kSmallAngle ? detail::left_jacobian_taylor(omega)
                                    : detail::left_jacobian_general(omega);
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  return omega.norm() < kSmallAngle ? detail::left_jacobian_inverse_taylor(omega)
                                    : detail::left_jacobian_inverse_general(omega);
}

/// Inverse right Jacobian: d log(R exp(dw)) / d dw at dw = 0, with phi = log(R).
inline Mat3 so3_right_jacobian_inverse(const Vec3& phi) {
  const Mat3 k = hat(phi);
  const double c = phi.norm() < kSmallAngle ? 1.0 / 12.0 : detail::inv_jacobian_k2_coeff(phi.norm());
  return Mat3::Identity() + 0.5 * k + c * k * k;
}

/// Element of SO(3), stored as a unit quaternion.
class Rotation {
public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}

  /// Normalizes the input; a zero quaternion yields identity.
  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    Rotation r;
    const double n = q.norm();
    if (n > 0.0) r.q_ = Eigen::Quaterniond(q.coeffs() / n);
    return r;
  }

  static Rotation from_wxyz(double w, double x, double y, double z) {
    return from_quaternion(Eigen::Quaterniond(w, x, y, z));
  }

  static Rotation from_axis_angle(const Vec3& axis, double angle) {
    return exp(axis.normalized() * angle);
  }

  static Rotation from_matrix(const Mat3& m) { return from_quaternion(Eigen::Quaterniond(m)); }

  static Rotation exp(const Vec3& omega) {
    Rotation r;
    r.q_ = omega.norm() < kSmallAngle ? detail::so3_exp_taylor(omega) : detail::so3_exp_general(omega);
    return r;
  }

  /// Rotation vector on the principal branch; defined for every rotation
  /// (at exactly pi the axis sign is whichever the quaternion carries).
  Vec3 log() const {
    Eigen::Quaterniond q = q_;
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3 v = q.vec();
    const double sn = v.norm();
    const double theta = 2.0 * std::atan2(sn, q.w());
    if (theta < kSmallAngle) {
      const double w = q.w();
      return (2.0 / w) * (1.0 - sn * sn / (3.0 * w * w)) * v;
    }
    return (theta / sn) * v;
  }

  /// Rotation angle in [0, pi].
  double angle() const { return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w())); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Rotation inverse() const {
    Rotation r;
    r.q_ = q_.conjugate();
    return r;
  }

  Rotation operator*(const Rotation& other) const { return from_quaternion(q_ * other.q_); }
  Vec3 operator*(const Vec3& p) const { return q_ * p; }

private:
  Eigen::Quaterniond q_;
};

/// Rotation about X, Y or Z by `angle` radians.
inline Rotation rot_x(double angle) { return Rotation::exp(Vec3::UnitX() * angle); }
inline Rotation rot_y(double angle) { return Rotation::exp(Vec3::UnitY() * angle); }
inline Rotation rot_z(double angle) { return Rotation::exp(Vec3::UnitZ() * angle); }

/// Geodesic angle between two rotations, angle(a^-1 b), in [0, pi].
inline double angle_between(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).angle();
}

/// Element of SE(3). Maps points from its child frame into its parent frame.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  RigidTransform() = default;
  RigidTransform(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(double x, double y, double z) { return {Rotation(), Vec3(x, y, z)}; }
  static RigidTransform from_rotation(const Rotation& r) { return {r, Vec3::Zero()}; }

  static RigidTransform from_matrix(const Mat4& m) {
    return {Rotation::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) { return compose(a, b); }

inline RigidTransform inverse(const RigidTransform& t) {
  const Rotation r_inv = t.rotation.inverse();
  return {r_inv, -(r_inv * t.translation)};
}

inline RigidTransform exp(const Twist& xi) {
  const Vec3 omega = xi.head<3>();
  return {Rotation::exp(omega), so3_left_jacobian(omega) * xi.tail<3>()};
}

/// Principal-branch logarithm. Throws BranchAmbiguity when the rotation angle
/// is within kLogBranchMargin of pi.
inline Twist log(const RigidTransform& t) {
  const double angle = t.rotation.angle();
  if (angle >= std::numbers::pi - kLogBranchMargin) {
    throw Error(ErrorKind::BranchAmbiguity, "rotation angle " + std::to_string(angle) + " is too close to pi");
  }
  const Vec3 omega = t.rotation.log();
  Twist xi;
  xi.head<3>() = omega;
  xi.tail<3>() = so3_left_jacobian_inverse(omega) * t.translation;
  return xi;
}

/// sqrt(|t_a - t_b|^2 + rot_weight^2 * angle(R_a^T R_b)^2).
inline double se3_distance(const RigidTransform& a, const RigidTransform& b,
                           double rot_weight = kDefaultRotWeight) {
  if (!(rot_weight > 0.0)) throw Error(ErrorKind::Validation, "rot_weight must be positive");
  const double dt = (a.translation - b.translation).squaredNorm();
  const double dr = rot_weight * angle_between(a.rotation, b.rotation);
  return std::sqrt(dt + dr * dr);
}

/// Translation (m) and rotation (rad) components of the discrepancy between two poses.
struct PoseError {
  double translation = 0.0;
  double rotation = 0.0;
};

inline PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth) {
  return {(estimate.translation - truth.translation).norm(), angle_between(estimate.rotation, truth.rotation)};
}

}  // namespace fidex
