#pragma once

#include <Eigen/Dense>

namespace hybridlink {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Six-vector ordered (angular, linear). Used for strains, body velocities and
/// right-multiplicative pose perturbations alike.
using Twist = Vec6;

inline Twist make_twist(const Vec3& angular, const Vec3& linear) {
  Twist t;
  t << angular, linear;
  return t;
}

inline auto angular(const Twist& t) { return t.head<3>(); }
inline auto linear(const Twist& t) { return t.tail<3>(); }

/// Rigid transform (rotation, position). Composition follows the homogeneous
/// matrix product.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose translation(const Vec3& p) { return {Mat3::Identity(), p}; }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.position + position};
  }
  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -rt * position};
  }
  Vec3 transform(const Vec3& p) const { return rotation * p + position; }
  Mat4 matrix() const;
};

Mat3 skew(const Vec3& a);
Vec3 vee(const Mat3& m);

Mat4 hat_se3(const Twist& x);
Mat6 ad_se3(const Twist& x);

/// 6x6 adjoint of a pose: maps a twist in the child frame to the parent frame.
Mat6 adjoint(const Pose& pose);

/// exp(arclen * hat_se3(x)) in closed form.
Pose exp_se3(const Twist& x, double arclen = 1.0);

/// exp(arclen * ad_se3(x)); equals adjoint(exp_se3(x, arclen)).
Mat6 exp_adjoint(const Twist& x, double arclen);

/// Integral of exp(u * ad_se3(x)) for u in [0, arclen].
Mat6 tangent_integral(const Twist& x, double arclen);

/// Inverse of exp_se3(., 1). Throws AngleNearPi when the rotation angle is
/// within 1e-6 of pi.
Twist log_se3(const Pose& pose);

/// v - [theta, v]/2 + [theta, [theta, v]]/12: the inverse differential of exp
/// truncated after the second bracket (enough for 4th order Munthe-Kaas).
/// For H(t) = H0 exp(theta(t)) with body velocity eta, theta' = dexp_inv(-theta, eta).
Twist dexp_inv(const Twist& theta, const Twist& v);

/// Rotation of `angle` about the unit vector `axis`.
Mat3 axis_angle(const Vec3& axis, double angle);

/// Orthonormality / determinant check used by validators.
bool is_rotation(const Mat3& r, double tol = 1e-9);

}  // namespace hybridlink
