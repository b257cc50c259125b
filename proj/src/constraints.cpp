#include "loopdyn/constraints.hpp"

#include <algorithm>
#include <cmath>

namespace loopdyn {

namespace {

// Rows of one joint: positional block first, rotational block second.
//   translational residual: f3 = W_p^T (x_c - x_p)
//   rotational residual:    phi = log(W_p^T W_c)
// both expressed in the parent joint frame, so f is invariant under a rigid
// transform applied to every body and world anchor at once.
struct JointRows {
  std::vector<JacobianRow> rows;
  std::vector<double> f;
};

JointRows build_joint_rows(const MechanismModel& model, int joint, std::span<const Pose> poses) {
  const JointSpec& spec = model.joints[joint];
  const JointLayout& lay = model.joint_layout[joint];
  const JointFrames fr = joint_world_frames(model, joint, poses);
  const Mat3 wpt = fr.frame_parent.transpose();

  const int child = spec.child;
  const Vec3 lever_child = fr.anchor_child - poses[child].position;

  // Positional 3-row block.
  JacobianRow pos_rows[3];
  Vec3 f_pos = wpt * (fr.anchor_child - fr.anchor_parent);
  {
    const Mat3 child_lin = wpt;
    const Mat3 child_ang = -wpt * skew(lever_child);
    Mat3 parent_lin = Mat3::Zero();
    Mat3 parent_ang = Mat3::Zero();
    if (spec.parent != kWorld) {
      parent_lin = -wpt;
      parent_ang = wpt * skew(fr.anchor_child - poses[spec.parent].position);
    }
    for (int r = 0; r < 3; ++r) {
      pos_rows[r].body_a = child;
      pos_rows[r].block_a << child_lin.row(r), child_ang.row(r);
      if (spec.parent != kWorld) {
        pos_rows[r].body_b = spec.parent;
        pos_rows[r].block_b << parent_lin.row(r), parent_ang.row(r);
      }
    }
  }

  // Rotational 3-row block via the log of the relative rotation; d/dt phi =
  // Jl^{-1}(phi) W_p^T (w_c - w_p).
  JacobianRow rot_rows[3];
  Vec3 f_rot = Vec3::Zero();
  if (spec.type != JointType::Spherical) {
    const Mat3 rel = wpt * fr.frame_child;
    f_rot = so3_log(rel);
    const Mat3 ljin = left_jacobian_inverse(f_rot);
    const Mat3 child_ang = ljin * wpt;
    for (int r = 0; r < 3; ++r) {
      rot_rows[r].body_a = child;
      rot_rows[r].block_a << 0, 0, 0, child_ang.row(r);
      if (spec.parent != kWorld) {
        rot_rows[r].body_b = spec.parent;
        rot_rows[r].block_b << 0, 0, 0, -child_ang.row(r);
      }
    }
  }

  JointRows out;
  out.rows.reserve(lay.row_count);
  out.f.reserve(lay.row_count);
  auto push = [&](const JacobianRow& row, double fval) {
    out.rows.push_back(row);
    out.f.push_back(fval);
  };
  auto push_combined = [&](const JacobianRow base[3], const Vec3& fvec, const Vec3& weights) {
    // weights^T applied to a 3-row block.
    JacobianRow row;
    row.body_a = base[0].body_a;
    row.body_b = base[0].body_b;
    for (int r = 0; r < 3; ++r) {
      row.block_a += weights[r] * base[r].block_a;
      row.block_b += weights[r] * base[r].block_b;
    }
    push(row, weights.dot(fvec));
  };

  switch (spec.type) {
    case JointType::Fixed:
      for (int r = 0; r < 3; ++r) push(pos_rows[r], f_pos[r]);
      for (int r = 0; r < 3; ++r) push(rot_rows[r], f_rot[r]);
      break;
    case JointType::Revolute:
      for (int r = 0; r < 3; ++r) push(pos_rows[r], f_pos[r]);
      push_combined(rot_rows, f_rot, lay.complement.col(0));
      push_combined(rot_rows, f_rot, lay.complement.col(1));
      break;
    case JointType::Prismatic:
      push_combined(pos_rows, f_pos, lay.complement.col(0));
      push_combined(pos_rows, f_pos, lay.complement.col(1));
      for (int r = 0; r < 3; ++r) push(rot_rows[r], f_rot[r]);
      break;
    case JointType::Spherical:
      for (int r = 0; r < 3; ++r) push(pos_rows[r], f_pos[r]);
      break;
  }
  return out;
}

double clamp_abs(double v, double cap) { return std::clamp(v, -cap, cap); }

}  // namespace

VectorXd ConstraintSet::apply_jacobian(const VectorXd& u) const {
  VectorXd out(n_rows);
  for (int r = 0; r < n_rows; ++r) out[r] = rows[r].dot(u);
  return out;
}

VectorXd ConstraintSet::apply_jacobian_transpose(const VectorXd& lambda) const {
  VectorXd out = VectorXd::Zero(6 * n_bodies);
  for (int r = 0; r < n_rows; ++r) {
    const JacobianRow& row = rows[r];
    if (row.body_a >= 0) out.segment<6>(6 * row.body_a) += row.block_a.transpose() * lambda[r];
    if (row.body_b >= 0) out.segment<6>(6 * row.body_b) += row.block_b.transpose() * lambda[r];
  }
  return out;
}

MatrixXd ConstraintSet::dense_jacobian() const {
  MatrixXd j = MatrixXd::Zero(n_rows, 6 * n_bodies);
  for (int r = 0; r < n_rows; ++r) {
    const JacobianRow& row = rows[r];
    if (row.body_a >= 0) j.block<1, 6>(r, 6 * row.body_a) = row.block_a;
    if (row.body_b >= 0) j.block<1, 6>(r, 6 * row.body_b) = row.block_b;
  }
  return j;
}

BilateralBlock build_bilateral(const MechanismModel& model, std::span<const Pose> poses) {
  BilateralBlock out;
  out.rows.reserve(model.n_bilateral_rows);
  out.f.resize(model.n_bilateral_rows);
  int row = 0;
  for (size_t j = 0; j < model.joints.size(); ++j) {
    JointRows jr = build_joint_rows(model, static_cast<int>(j), poses);
    for (size_t k = 0; k < jr.rows.size(); ++k) {
      out.rows.push_back(jr.rows[k]);
      out.f[row++] = jr.f[k];
    }
  }
  return out;
}

VectorXd bilateral_residual(const MechanismModel& model, std::span<const Pose> poses) {
  return build_bilateral(model, poses).f;
}

JacobianRow coordinate_rate_row(const MechanismModel& model, int joint,
                                std::span<const Pose> poses) {
  const JointSpec& spec = model.joints[joint];
  if (spec.type != JointType::Revolute && spec.type != JointType::Prismatic) {
    throw ModelError(ModelError::Code::WrongJointType,
                     "joint '" + spec.name + "' has no scalar coordinate");
  }
  const JointFrames fr = joint_world_frames(model, joint, poses);
  const Vec3 axis_w = fr.frame_parent * spec.axis;
  JacobianRow row;
  row.body_a = spec.child;
  if (spec.type == JointType::Revolute) {
    row.block_a << 0, 0, 0, axis_w.transpose();
    if (spec.parent != kWorld) {
      row.body_b = spec.parent;
      row.block_b << 0, 0, 0, -axis_w.transpose();
    }
  } else {
    const Vec3 lever_child = fr.anchor_child - poses[spec.child].position;
    row.block_a << axis_w.transpose(), (-axis_w.transpose() * skew(lever_child));
    if (spec.parent != kWorld) {
      row.body_b = spec.parent;
      row.block_b << -axis_w.transpose(),
          (axis_w.transpose() * skew(fr.anchor_child - poses[spec.parent].position));
    }
  }
  return row;
}

ConstraintSet assemble_constraints(const MechanismModel& model, std::span<const Pose> poses,
                                   std::span<const Twist> twists,
                                   const std::vector<ContactPoint>& contacts,
                                   const AssembleConfig& config) {
  ConstraintSet cs;
  cs.n_bodies = model.n_bodies();
  cs.n_bilateral = model.n_bilateral_rows;
  cs.n_dynamics = model.n_dynamics_rows;
  cs.contacts = contacts;

  const double dt = config.dt;
  const double bgain = config.beta / dt;

  VectorXd u(6 * cs.n_bodies);
  for (int b = 0; b < cs.n_bodies; ++b) {
    u.segment<3>(6 * b) = twists[b].linear;
    u.segment<3>(6 * b + 3) = twists[b].angular;
  }

  // Active limit rows, joint order, lower before upper.
  struct LimitRow {
    int joint;
    int bound;  // 0 lower, 1 upper
    double gap;
  };
  std::vector<LimitRow> limits;
  std::vector<double> coord(model.joints.size(), 0.0);
  for (size_t j = 0; j < model.joints.size(); ++j) {
    const JointSpec& spec = model.joints[j];
    const bool scalar = spec.type == JointType::Revolute || spec.type == JointType::Prismatic;
    if (scalar && (spec.has_limits || spec.has_actuation)) {
      coord[j] = joint_coordinate(model, static_cast<int>(j), poses);
    }
    if (!spec.has_limits) continue;
    const double margin = spec.type == JointType::Revolute ? config.limit_margin_angular
                                                           : config.limit_margin_linear;
    const double g_lo = coord[j] - spec.lower;
    if (g_lo < margin) limits.push_back({static_cast<int>(j), 0, g_lo});
    const double g_up = spec.upper - coord[j];
    if (g_up < margin) limits.push_back({static_cast<int>(j), 1, g_up});
  }

  cs.n_limits = static_cast<int>(limits.size());
  cs.n_contact_rows = 3 * static_cast<int>(contacts.size());
  cs.n_rows = cs.n_bilateral + cs.n_dynamics + cs.n_limits + cs.n_contact_rows;
  cs.rows.resize(cs.n_rows);
  cs.bias = VectorXd::Zero(cs.n_rows);
  cs.reg = VectorXd::Zero(cs.n_rows);
  cs.limit_gap.resize(cs.n_limits);
  cs.cones.n_rows = cs.n_rows;

  // Structural bilateral rows with Baumgarte bias v* = -(beta/dt) f.
  BilateralBlock bb = build_bilateral(model, poses);
  cs.bilateral_f = bb.f;
  for (int r = 0; r < cs.n_bilateral; ++r) {
    cs.rows[r] = bb.rows[r];
    cs.bias[r] = clamp_abs(-bgain * bb.f[r], config.bias_clamp);
  }

  // Joint-dynamics rows: implicit PD, armature, viscous damping, all acting on
  // the coordinate-rate row of their joint.
  int r = cs.n_bilateral;
  for (size_t j = 0; j < model.joints.size(); ++j) {
    const JointSpec& spec = model.joints[j];
    const JointLayout& lay = model.joint_layout[j];
    if (lay.dyn_count == 0) continue;
    const JacobianRow rate = coordinate_rate_row(model, static_cast<int>(j), poses);
    if (lay.has_pd) {
      cs.rows[r] = rate;
      cs.reg[r] = 1.0 / (dt * (dt * spec.kp + spec.kd));
      cs.bias[r] =
          (spec.kp * (spec.target - coord[j]) + spec.kd * spec.target_rate) / (dt * spec.kp + spec.kd);
      ++r;
    }
    if (lay.has_armature) {
      cs.rows[r] = rate;
      cs.reg[r] = 1.0 / spec.armature;
      cs.bias[r] = rate.dot(u);
      ++r;
    }
    if (lay.has_damping) {
      cs.rows[r] = rate;
      cs.reg[r] = 1.0 / (dt * spec.damping);
      cs.bias[r] = 0.0;
      ++r;
    }
  }
  if (cs.n_bilateral + cs.n_dynamics > 0) {
    cs.cones.groups.push_back(
        {ConeGroup::Kind::Bilateral, 0, cs.n_bilateral + cs.n_dynamics, 0.0});
  }

  // Limit rows enter the nonnegative cone one by one.
  for (int k = 0; k < cs.n_limits; ++k) {
    const LimitRow& lim = limits[k];
    JacobianRow rate = coordinate_rate_row(model, lim.joint, poses);
    if (lim.bound == 1) {
      rate.block_a = -rate.block_a;
      rate.block_b = -rate.block_b;
    }
    cs.rows[r] = rate;
    cs.bias[r] = std::min(-bgain * std::min(lim.gap, 0.0), config.bias_clamp);
    cs.limit_gap[k] = lim.gap;
    cs.limit_keys.emplace_back(lim.joint, lim.bound);
    cs.cones.groups.push_back({ConeGroup::Kind::Nonnegative, r, 1, 0.0});
    ++r;
  }

  // Contact rows: (normal, t1, t2) per contact, second-order cone K_mu.
  cs.contact_frames.reserve(contacts.size());
  for (size_t c = 0; c < contacts.size(); ++c) {
    const ContactPoint& cp = contacts[c];
    const Mat3 frame = contact_frame(cp.normal);
    cs.contact_frames.push_back(frame);
    const int body_a = model.geoms[cp.geom_a].body;
    const int body_b = model.geoms[cp.geom_b].body;
    for (int d = 0; d < 3; ++d) {
      const Vec3 dir = frame.col(d);
      JacobianRow row;
      row.body_a = body_a;           // contacts always have a moving geom first
      row.block_a << dir.transpose(),
          (-dir.transpose() * skew(cp.position - poses[body_a].position));
      if (body_b != kWorld) {
        row.body_b = body_b;
        row.block_b << -dir.transpose(),
            (dir.transpose() * skew(cp.position - poses[body_b].position));
      }
      cs.rows[r + d] = row;
    }
    const double vn_minus = cs.rows[r].dot(u);
    double bias_n = std::min(-bgain * std::min(-cp.depth, 0.0), config.bias_clamp);
    if (vn_minus < -config.impact_velocity_threshold) {
      bias_n += -cp.restitution * vn_minus;
    }
    cs.bias[r] = bias_n;
    cs.cones.groups.push_back({ConeGroup::Kind::SecondOrder, r, 3, cp.mu});
    r += 3;
  }

  return cs;
}

double constraint_jacobian_fd_check(const MechanismModel& model, std::span<const Pose> poses,
                                    double step) {
  const BilateralBlock bb = build_bilateral(model, poses);
  const int n_rows = static_cast<int>(bb.rows.size());
  double worst = 0.0;
  std::vector<Pose> plus(poses.begin(), poses.end());
  std::vector<Pose> minus(poses.begin(), poses.end());
  for (int b = 0; b < model.n_bodies(); ++b) {
    for (int k = 0; k < 6; ++k) {
      plus.assign(poses.begin(), poses.end());
      minus.assign(poses.begin(), poses.end());
      if (k < 3) {
        plus[b].position[k] += step;
        minus[b].position[k] -= step;
      } else {
        // World-frame chart, matching the world angular-velocity convention
        // of the Jacobian columns.
        Vec3 delta = Vec3::Zero();
        delta[k - 3] = 1.0;
        plus[b].orientation = quat_exp(0.5 * step * delta) * plus[b].orientation;
        minus[b].orientation = quat_exp(-0.5 * step * delta) * minus[b].orientation;
      }
      const VectorXd fp = bilateral_residual(model, plus);
      const VectorXd fm = bilateral_residual(model, minus);
      for (int row = 0; row < n_rows; ++row) {
        const double fd = (fp[row] - fm[row]) / (2.0 * step);
        double analytic = 0.0;
        if (bb.rows[row].body_a == b) analytic += bb.rows[row].block_a[k];
        if (bb.rows[row].body_b == b) analytic += bb.rows[row].block_b[k];
        worst = std::max(worst, std::abs(fd - analytic));
      }
    }
  }
  return worst;
}

}  // namespace loopdyn
