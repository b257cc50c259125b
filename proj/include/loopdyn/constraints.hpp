#pragma once

#include <span>
#include <utility>
#include <vector>

#include "loopdyn/cones.hpp"
#include "loopdyn/contacts.hpp"
#include "loopdyn/model.hpp"
#include "loopdyn/se3.hpp"

namespace loopdyn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One block-sparse Jacobian row: at most two 6-wide body blocks (exactly one
// when the constraint involves the world).
struct JacobianRow {
  int body_a = -1;
  int body_b = -1;
  RowVector6 block_a = RowVector6::Zero();
  RowVector6 block_b = RowVector6::Zero();

  double dot(const VectorXd& u) const {
    double s = 0;
    if (body_a >= 0) s += block_a * u.segment<6>(6 * body_a);
    if (body_b >= 0) s += block_b * u.segment<6>(6 * body_b);
    return s;
  }
};

// Row layout, fixed by the model module's ordering decision:
//   [ structural bilateral rows | joint-dynamics rows | limit rows | contact rows ]
// Structural rows come in joint declaration order, positional before
// rotational within a joint. Joint-dynamics rows are PD, armature, damping per
// joint. Limit rows come in joint order, lower before upper. Contact rows are
// 3 per contact, normal first.
struct ConstraintSet {
  int n_rows = 0;
  int n_bodies = 0;
  int n_bilateral = 0;
  int n_dynamics = 0;
  int n_limits = 0;
  int n_contact_rows = 0;

  std::vector<JacobianRow> rows;
  VectorXd bias;  // v*: target constraint-space velocity per row
  VectorXd reg;   // R: nonnegative per-row regularization

  VectorXd bilateral_f;  // structural position error, size n_bilateral
  VectorXd limit_gap;    // per active limit row
  std::vector<std::pair<int, int>> limit_keys;  // (joint, 0 lower / 1 upper)

  ConeProduct cones;
  std::vector<ContactPoint> contacts;
  std::vector<Mat3> contact_frames;

  int first_limit_row() const { return n_bilateral + n_dynamics; }
  int first_contact_row() const { return n_bilateral + n_dynamics + n_limits; }

  VectorXd apply_jacobian(const VectorXd& u) const;
  VectorXd apply_jacobian_transpose(const VectorXd& lambda) const;
  MatrixXd dense_jacobian() const;
};

struct AssembleConfig {
  double dt = 1.0 / 240.0;
  double beta = 0.2;           // Baumgarte coefficient
  double bias_clamp = 10.0;    // cap on |beta/dt * violation|, m/s
  double limit_margin_angular = 0.01;   // rad
  double limit_margin_linear = 0.001;   // m
  double impact_velocity_threshold = 0.1;  // m/s
};

// Structural bilateral rows and residual only (no biases); shared by the
// assembler, the FK solver and the finite-difference check.
struct BilateralBlock {
  std::vector<JacobianRow> rows;
  VectorXd f;
};
BilateralBlock build_bilateral(const MechanismModel& model, std::span<const Pose> poses);

// Residual vector f(q) of the structural joint constraints.
VectorXd bilateral_residual(const MechanismModel& model, std::span<const Pose> poses);

// Velocity row of a revolute/prismatic joint coordinate.
JacobianRow coordinate_rate_row(const MechanismModel& model, int joint,
                                std::span<const Pose> poses);

ConstraintSet assemble_constraints(const MechanismModel& model, std::span<const Pose> poses,
                                   std::span<const Twist> twists,
                                   const std::vector<ContactPoint>& contacts,
                                   const AssembleConfig& config);

// Max deviation between the analytic bilateral Jacobian and central finite
// differences of f under SE(3) chart perturbations of every body.
double constraint_jacobian_fd_check(const MechanismModel& model, std::span<const Pose> poses,
                                    double step = 1e-5);

}  // namespace loopdyn
