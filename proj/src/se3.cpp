#include "hybridlink/se3.hpp"

#include <cmath>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

// Below this rotation angle the Rodrigues coefficients are replaced by their
// Taylor expansions.
constexpr double kRodriguesSeriesThreshold = 1e-4;

// The fourth-order closed form of the tangent integral divides by |w|^5; the
// power series is used when |w| * arclen is below this.
constexpr double kTangentSeriesThreshold = 0.1;

}  // namespace

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownBody: return "UnknownBody";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::InfeasibleOrUnbounded: return "InfeasibleOrUnbounded";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = position;
  return m;
}

Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat4 hat_se3(const Twist& x) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(angular(x));
  m.topRightCorner<3, 1>() = linear(x);
  return m;
}

Mat6 ad_se3(const Twist& x) {
  Mat6 m = Mat6::Zero();
  const Mat3 w = skew(angular(x));
  m.topLeftCorner<3, 3>() = w;
  m.bottomRightCorner<3, 3>() = w;
  m.bottomLeftCorner<3, 3>() = skew(linear(x));
  return m;
}

Mat6 adjoint(const Pose& pose) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = pose.rotation;
  m.bottomRightCorner<3, 3>() = pose.rotation;
  m.bottomLeftCorner<3, 3>() = skew(pose.position) * pose.rotation;
  return m;
}

Pose exp_se3(const Twist& x, double arclen) {
  const Vec3 w = arclen * angular(x);
  const Vec3 v = arclen * linear(x);
  const double th2 = w.squaredNorm();
  const double th = std::sqrt(th2);

  double a, b, c;
  if (th < kRodriguesSeriesThreshold) {
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
    c = 1.0 / 6.0 - th2 / 120.0;
  } else {
    const double s = std::sin(th);
    const double co = std::cos(th);
    a = s / th;
    b = (1.0 - co) / th2;
    c = (th - s) / (th2 * th);
  }
  const Mat3 wx = skew(w);
  const Mat3 wx2 = wx * wx;
  Pose out;
  out.rotation = Mat3::Identity() + a * wx + b * wx2;
  out.position = (Mat3::Identity() + b * wx + c * wx2) * v;
  return out;
}

Mat6 exp_adjoint(const Twist& x, double arclen) {
  return adjoint(exp_se3(x, arclen));
}

Mat6 tangent_integral(const Twist& x, double arclen) {
  if (arclen == 0.0) return Mat6::Zero();
  const Mat6 ad = ad_se3(x);
  const double th = angular(x).norm();
  const double t = th * std::abs(arclen);

  if (t < kTangentSeriesThreshold) {
    // sum_k arclen^(k+1)/(k+1)! ad^k
    Mat6 term = arclen * Mat6::Identity();
    Mat6 sum = term;
    for (int k = 1; k < 60; ++k) {
      term = (arclen / (k + 1)) * (term * ad);
      sum += term;
      if (term.cwiseAbs().maxCoeff() <= 1e-18 * sum.cwiseAbs().maxCoeff()) break;
    }
    return sum;
  }

  // ad satisfies ad^5 = -2 th^2 ad^3 - th^4 ad, so the integral is a quartic
  // polynomial in ad.
  const double s = std::sin(arclen * th);
  const double co = std::cos(arclen * th);
  const double ts = arclen * th;
  const double th2 = th * th;
  const double c1 = (4.0 - 4.0 * co - ts * s) / (2.0 * th2);
  const double c2 = (4.0 * ts - 5.0 * s + ts * co) / (2.0 * th2 * th);
  const double c3 = (2.0 - 2.0 * co - ts * s) / (2.0 * th2 * th2);
  const double c4 = (2.0 * ts - 3.0 * s + ts * co) / (2.0 * th2 * th2 * th);
  const Mat6 ad2 = ad * ad;
  const Mat6 ad3 = ad2 * ad;
  const Mat6 ad4 = ad2 * ad2;
  return arclen * Mat6::Identity() + c1 * ad + c2 * ad2 + c3 * ad3 + c4 * ad4;
}

Twist log_se3(const Pose& pose) {
  const Mat3& r = pose.rotation;
  const Vec3 axis2 = vee(r - r.transpose());  // 2 sin(th) * axis
  const double sin_th = 0.5 * axis2.norm();
  const double cos_th = 0.5 * (r.trace() - 1.0);
  const double th = std::atan2(sin_th, cos_th);
  if (th >= M_PI - 1e-6) {
    fail(ErrorCode::AngleNearPi, "log_se3: rotation angle is within 1e-6 of pi");
  }

  const double th2 = th * th;
  double half_factor;  // th / (2 sin th)
  double v_coeff;      // coefficient of W^2 in V^-1
  if (th < kRodriguesSeriesThreshold) {
    half_factor = 0.5 * (1.0 + th2 / 6.0);
    v_coeff = 1.0 / 12.0 + th2 / 720.0;
  } else {
    half_factor = th / (2.0 * std::sin(th));
    const double a = std::sin(th) / th;
    const double b = (1.0 - std::cos(th)) / th2;
    v_coeff = (1.0 - a / (2.0 * b)) / th2;
  }
  const Vec3 w = half_factor * axis2;
  const Mat3 wx = skew(w);
  const Mat3 v_inv = Mat3::Identity() - 0.5 * wx + v_coeff * wx * wx;
  return make_twist(w, v_inv * pose.position);
}

Twist dexp_inv(const Twist& theta, const Twist& v) {
  const Mat6 ad = ad_se3(theta);
  const Twist adv = ad * v;
  return v - 0.5 * adv + (1.0 / 12.0) * (ad * adv);
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return exp_se3(make_twist(axis, Vec3::Zero()), angle).rotation;
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace hybridlink
