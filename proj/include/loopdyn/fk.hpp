#pragma once

#include <utility>
#include <vector>

#include "loopdyn/constraints.hpp"
#include "loopdyn/model.hpp"

namespace loopdyn {

// Find body poses consistent with all structural joint constraints plus
// target coordinates for a chosen subset of joints.
struct FkProblem {
  const MechanismModel* model = nullptr;
  std::vector<std::pair<int, double>> targets;  // (joint index, coordinate)
  std::vector<Pose> initial_poses;
};

struct FkConfig {
  double tolerance = 1e-8;  // on |r|_inf
  int max_iters = 100;
  double lm_initial = 1e-6;  // Levenberg damping: x10 on reject, /10 on accept
};

struct FkResult {
  std::vector<Pose> poses;
  double residual_inf = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Gauss-Newton with Levenberg damping on the stacked residual
// [bilateral f; coordinate - target], pose updates through the local
// (right-multiplication) exponential chart.
FkResult fk_solve(const FkProblem& problem, const FkConfig& config = {});

}  // namespace loopdyn
