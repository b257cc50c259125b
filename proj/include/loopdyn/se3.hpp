#pragma once

#include <Eigen/Dense>

namespace loopdyn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using RowVector6 = Eigen::Matrix<double, 1, 6>;

// Conventions, fixed project-wide:
//   - quaternions are Hamilton products, serialized scalar-first [w,x,y,z];
//   - a body pose maps body to world, x_w = r + R(q) x_b;
//   - twists are world-frame: linear = d/dt r, angular = world angular velocity;
//   - per-body velocity vectors stack [linear; angular].

struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Mat3 rotation() const { return orientation.toRotationMatrix(); }
  Vec3 transform(const Vec3& p_body) const {
    return position + orientation * p_body;
  }
};

struct Twist {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
};

// Mass and body-frame rotational inertia about the center of mass.
struct InertiaBlock {
  double mass = 1.0;
  Mat3 body_inertia = Mat3::Identity();
};

Mat3 skew(const Vec3& v);

// Closed-form SO(3) exponential as a quaternion: exp(v) rotates by 2|v| about v.
Quat quat_exp(const Vec3& v);

// One explicit orientation step: q ⊗ exp(w*dt/2), renormalized. The rate w is
// expressed in the body frame; a world-frame rate w_w is equivalent via
// quat_integrate(q, R(q)^T w_w, dt).
Quat quat_integrate(const Quat& q, const Vec3& w, double dt);

// Rodrigues rotation for an angle*axis vector.
Mat3 so3_exp(const Vec3& phi);

// Inverse of so3_exp, returning angle*axis with angle in [0, pi].
Vec3 so3_log(const Mat3& rot);
Vec3 so3_log(const Quat& q);

// Inverse left Jacobian of SO(3): d/dt log(E) = Jl_inv(log E) * delta when
// dE/dt = skew(delta) * E.
Mat3 left_jacobian_inverse(const Vec3& phi);

// World-frame rotational inertia R I_b R^T (symmetrized).
Mat3 world_inertia(const InertiaBlock& inertia, const Quat& q);

// 6x6 block of the system mass matrix: diag(m I3, R I_b R^T).
Matrix6 world_mass_block(const InertiaBlock& inertia, const Quat& q);

// M^{-1} applied to a wrench [force; torque]; the rotational part goes through
// a 3x3 solve, never a 6x6 inverse.
Twist inv_mass_apply(const InertiaBlock& inertia, const Quat& q, const Vector6& wrench);

// Two unit vectors completing `axis` to a right-handed orthonormal triad,
// chosen deterministically from the world axis least aligned with it.
Eigen::Matrix<double, 3, 2> orthonormal_complement(const Vec3& axis);

}  // namespace loopdyn
