#include "loopdyn/se3.hpp"

#include <cmath>

namespace loopdyn {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Quat quat_exp(const Vec3& v) {
  const double angle = v.norm();
  double sinc;
  if (angle < 1e-8) {
    sinc = 1.0 - angle * angle / 6.0;
  } else {
    sinc = std::sin(angle) / angle;
  }
  Quat q;
  q.w() = std::cos(angle);
  q.vec() = sinc * v;
  return q;
}

Quat quat_integrate(const Quat& q, const Vec3& w, double dt) {
  const Quat dq = quat_exp(0.5 * dt * w);
  Quat out = q * dq;
  out.normalize();
  return out;
}

Mat3 so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  double a, b;
  if (angle < 1e-8) {
    a = 1.0 - angle * angle / 6.0;
    b = 0.5 - angle * angle / 24.0;
  } else {
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / (angle * angle);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) {
    q.coeffs() = -q.coeffs();
  }
  const double vn = q.vec().norm();
  const double angle = 2.0 * std::atan2(vn, q.w());
  if (vn < 1e-12) {
    return 2.0 * q.vec();  // first-order: vec = axis*angle/2
  }
  return (angle / vn) * q.vec();
}

Vec3 so3_log(const Mat3& rot) { return so3_log(Quat(rot)); }

Mat3 left_jacobian_inverse(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  double c;
  if (angle < 1e-4) {
    c = 1.0 / 12.0 + angle * angle / 720.0;
  } else {
    c = 1.0 / (angle * angle) -
        (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  }
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

Mat3 world_inertia(const InertiaBlock& inertia, const Quat& q) {
  const Mat3 r = q.toRotationMatrix();
  Mat3 iw = r * inertia.body_inertia * r.transpose();
  return 0.5 * (iw + iw.transpose());
}

Matrix6 world_mass_block(const InertiaBlock& inertia, const Quat& q) {
  Matrix6 m = Matrix6::Zero();
  m.topLeftCorner<3, 3>() = inertia.mass * Mat3::Identity();
  m.bottomRightCorner<3, 3>() = world_inertia(inertia, q);
  return m;
}

Twist inv_mass_apply(const InertiaBlock& inertia, const Quat& q, const Vector6& wrench) {
  Twist t;
  t.linear = wrench.head<3>() / inertia.mass;
  const Mat3 iw = world_inertia(inertia, q);
  t.angular = iw.llt().solve(wrench.tail<3>());
  return t;
}

Eigen::Matrix<double, 3, 2> orthonormal_complement(const Vec3& axis) {
  int least = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(axis[k]) < std::abs(axis[least])) least = k;
  }
  Vec3 e = Vec3::Zero();
  e[least] = 1.0;
  Vec3 b1 = (e - e.dot(axis) * axis).normalized();
  Vec3 b2 = axis.cross(b1);
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = b1;
  b.col(1) = b2;
  return b;
}

}  // namespace loopdyn
