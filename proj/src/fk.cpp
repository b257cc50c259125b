#include "loopdyn/fk.hpp"

#include <cmath>

namespace loopdyn {

namespace {

VectorXd fk_residual(const MechanismModel& model, const FkProblem& problem,
                     std::span<const Pose> poses) {
  const VectorXd f = bilateral_residual(model, poses);
  VectorXd r(f.size() + static_cast<Eigen::Index>(problem.targets.size()));
  r.head(f.size()) = f;
  for (size_t k = 0; k < problem.targets.size(); ++k) {
    const auto& [joint, target] = problem.targets[k];
    const double q = joint_coordinate(model, joint, poses);
    double d = q - target;
    if (model.joints[joint].type == JointType::Revolute) {
      d = std::remainder(d, 2.0 * M_PI);
    }
    r[f.size() + static_cast<Eigen::Index>(k)] = d;
  }
  return r;
}

// Jacobian in the local chart: the angular block of each world-frame row is
// post-multiplied by R_i (pose update q <- q * exp(delta/2)).
MatrixXd fk_jacobian(const MechanismModel& model, const FkProblem& problem,
                     std::span<const Pose> poses) {
  const BilateralBlock bb = build_bilateral(model, poses);
  const int n_f = static_cast<int>(bb.rows.size());
  const int n_t = static_cast<int>(problem.targets.size());
  MatrixXd j = MatrixXd::Zero(n_f + n_t, 6 * model.n_bodies());
  auto scatter = [&](int out_row, const JacobianRow& row) {
    if (row.body_a >= 0) {
      const Mat3 rot = poses[row.body_a].rotation();
      j.block<1, 3>(out_row, 6 * row.body_a) = row.block_a.head<3>();
      j.block<1, 3>(out_row, 6 * row.body_a + 3) = row.block_a.tail<3>() * rot;
    }
    if (row.body_b >= 0) {
      const Mat3 rot = poses[row.body_b].rotation();
      j.block<1, 3>(out_row, 6 * row.body_b) = row.block_b.head<3>();
      j.block<1, 3>(out_row, 6 * row.body_b + 3) = row.block_b.tail<3>() * rot;
    }
  };
  for (int r = 0; r < n_f; ++r) scatter(r, bb.rows[r]);
  for (int k = 0; k < n_t; ++k) {
    scatter(n_f + k, coordinate_rate_row(model, problem.targets[k].first, poses));
  }
  return j;
}

std::vector<Pose> apply_update(std::span<const Pose> poses, const VectorXd& delta) {
  std::vector<Pose> out(poses.begin(), poses.end());
  for (size_t b = 0; b < out.size(); ++b) {
    out[b].position += delta.segment<3>(6 * b);
    out[b].orientation =
        (out[b].orientation * quat_exp(0.5 * delta.segment<3>(6 * b + 3))).normalized();
  }
  return out;
}

}  // namespace

FkResult fk_solve(const FkProblem& problem, const FkConfig& config) {
  const MechanismModel& model = *problem.model;
  FkResult result;
  result.poses = problem.initial_poses;

  VectorXd r = fk_residual(model, problem, result.poses);
  double r_norm = r.norm();
  result.residual_inf = r.lpNorm<Eigen::Infinity>();
  if (result.residual_inf < config.tolerance) {
    result.converged = true;
    return result;  // already consistent, poses untouched
  }

  double lm = config.lm_initial;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    result.iterations = iter + 1;
    const MatrixXd j = fk_jacobian(model, problem, result.poses);
    MatrixXd normal = j.transpose() * j;
    normal.diagonal().array() += lm;
    const VectorXd delta = normal.ldlt().solve(-j.transpose() * r);

    const std::vector<Pose> candidate = apply_update(result.poses, delta);
    const VectorXd r_cand = fk_residual(model, problem, candidate);
    const double cand_norm = r_cand.norm();
    if (cand_norm < r_norm) {
      result.poses = candidate;
      r = r_cand;
      r_norm = cand_norm;
      result.residual_inf = r.lpNorm<Eigen::Infinity>();
      lm = std::max(lm / 10.0, 1e-12);
      if (result.residual_inf < config.tolerance) {
        result.converged = true;
        return result;
      }
    } else {
      lm = lm * 10.0;
      if (lm > 1e10) break;  // stuck; report the best iterate
    }
  }
  result.converged = result.residual_inf < config.tolerance;
  return result;
}

}  // namespace loopdyn
