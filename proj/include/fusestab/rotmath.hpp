#pragma once

// Quaternion and rotation-manifold arithmetic.
//
// Conventions: Hamilton product, (w, x, y, z) component order, rotations act on
// column vectors as R(q) * p. Stored quaternions are kept in the w >= 0
// hemisphere; every comparison treats q and -q as the same rotation.
//
// All functions are templated on the scalar so the loss and projection code can
// run unchanged on double and on AdScalar.

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fusestab/errors.hpp"
#include "fusestab/scalar.hpp"

namespace fusestab {

template <typename S>
using Quat = Eigen::Quaternion<S>;
template <typename S>
using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Vec4 = Eigen::Matrix<S, 4, 1>;

using Quaternion = Quat<double>;
/// Axis-angle tangent vector; magnitude is the angle in radians.
using RotationVector = Vec3<double>;

/// Below this angle (radians) exp_map / log_map switch to their series branch.
inline constexpr double kSmallAngle = 1e-6;

template <typename S>
Vec4<S> to_wxyz(const Quat<S>& q) {
  return Vec4<S>(q.w(), q.x(), q.y(), q.z());
}

template <typename Derived>
Quat<typename Derived::Scalar> from_wxyz(const Eigen::MatrixBase<Derived>& v) {
  return Quat<typename Derived::Scalar>(v(0), v(1), v(2), v(3));
}

/// Flip to the w >= 0 hemisphere.
template <typename S>
Quat<S> canonical(const Quat<S>& q) {
  if (value_of(q.w()) < 0.0) return Quat<S>(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

template <typename S>
S dot(const Quat<S>& a, const Quat<S>& b) {
  return a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
}

template <typename S>
Quat<S> normalized(const Quat<S>& q) {
  using std::sqrt;
  const S n = sqrt(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z());
  return Quat<S>(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

template <typename S>
Quat<S> exp_map(const Vec3<S>& v) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S theta2 = v.squaredNorm();
  if (value_of(theta2) < kSmallAngle * kSmallAngle) {
    const S k = S(0.5) - theta2 / 48.0;
    return canonical(Quat<S>(S(1.0) - theta2 / 8.0, k * v.x(), k * v.y(), k * v.z()));
  }
  const S theta = sqrt(theta2);
  const S k = sin(theta / 2.0) / theta;
  return canonical(Quat<S>(cos(theta / 2.0), k * v.x(), k * v.y(), k * v.z()));
}

template <typename S>
Vec3<S> log_map(const Quat<S>& q_in) {
  using std::atan2;
  using std::sqrt;
  const Quat<S> q = canonical(q_in);
  const S n2 = q.x() * q.x() + q.y() * q.y() + q.z() * q.z();
  const double half = kSmallAngle / 2.0;
  S k;
  if (value_of(n2) < half * half) {
    k = S(2.0) / q.w() * (S(1.0) - n2 / (S(3.0) * q.w() * q.w()));
  } else {
    const S n = sqrt(n2);
    k = S(2.0) * atan2(n, q.w()) / n;
  }
  return Vec3<S>(k * q.x(), k * q.y(), k * q.z());
}

/// Rotation of `v` by the unit quaternion `q`.
template <typename S>
Vec3<S> rotate(const Quat<S>& q, const Vec3<S>& v) {
  // v' = v + 2w (u x v) + 2 u x (u x v)
  const Vec3<S> u(q.x(), q.y(), q.z());
  const Vec3<S> t = S(2.0) * u.cross(v);
  return v + q.w() * t + u.cross(t);
}

/// Geodesic interpolation, u = 0 -> qa, u = 1 -> qb. qb is sign-flipped first
/// when the two lie in opposite hemispheres.
template <typename S>
Quat<S> slerp(const Quat<S>& qa, const Quat<S>& qb, const S& u) {
  const double uv = value_of(u);
  if (!(uv >= 0.0 && uv <= 1.0)) throw InvalidArgument("slerp: interpolation factor outside [0, 1]");
  if (uv == 0.0) return canonical(qa);
  if (uv == 1.0) return canonical(qb);
  const Quat<S> b = value_of(dot(qa, qb)) < 0.0 ? Quat<S>(-qb.w(), -qb.x(), -qb.y(), -qb.z()) : qb;
  const Vec3<S> step = log_map(Quat<S>(qa.conjugate() * b));
  return canonical(Quat<S>(qa * exp_map(Vec3<S>(u * step))));
}

/// Angle of the relative rotation between qa and qb, in [0, pi].
template <typename S>
S spherical_angle(const Quat<S>& qa, const Quat<S>& qb) {
  using std::abs;
  using std::atan2;
  using std::sqrt;
  const Quat<S> d = qa.conjugate() * qb;
  const S n2 = d.x() * d.x() + d.y() * d.y() + d.z() * d.z();
  if (value_of(n2) == 0.0) return S(0.0);
  return S(2.0) * atan2(sqrt(n2), abs(d.w()));
}

/// Increment of a body rotating at constant `omega` (rad/s) for `dt` seconds.
inline Quaternion quat_from_angular_velocity(const Eigen::Vector3d& omega, double dt) {
  if (!omega.allFinite() || !std::isfinite(dt)) {
    throw InvalidArgument("quat_from_angular_velocity: non-finite input");
  }
  if (dt < 0.0) throw InvalidArgument("quat_from_angular_velocity: negative dt");
  return exp_map<double>(omega * dt);
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// J with exp(v + dv) = exp(J dv) exp(v) to first order.
inline Eigen::Matrix3d left_jacobian(const Eigen::Vector3d& v) {
  const double t2 = v.squaredNorm();
  const Eigen::Matrix3d V = skew(v);
  double a, b;
  if (t2 < 1e-8) {
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double t = std::sqrt(t2);
    a = (1.0 - std::cos(t)) / t2;
    b = (t - std::sin(t)) / (t2 * t);
  }
  return Eigen::Matrix3d::Identity() + a * V + b * V * V;
}

/// Uniform random rotation with axis uniform on the sphere and angle uniform in
/// [-max_angle, max_angle]. `uniform01` returns doubles in [0, 1).
template <typename Uniform01>
Quaternion random_rotation(Uniform01&& uniform01, double max_angle) {
  const double z = 2.0 * uniform01() - 1.0;
  const double phi = 2.0 * M_PI * uniform01();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Eigen::Vector3d axis(r * std::cos(phi), r * std::sin(phi), z);
  const double angle = (2.0 * uniform01() - 1.0) * max_angle;
  return exp_map<double>(axis * angle);
}

}  // namespace fusestab
