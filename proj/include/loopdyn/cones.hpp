#pragma once

#include <vector>

#include <Eigen/Dense>

namespace loopdyn {

// One factor of the Cartesian cone product K. Second-order groups are exactly
// 3 consecutive rows, normal first.
struct ConeGroup {
  enum class Kind { Bilateral, Nonnegative, SecondOrder };
  Kind kind = Kind::Bilateral;
  int begin = 0;
  int dim = 0;
  double mu = 0.0;  // SecondOrder only
};

struct ConeProduct {
  std::vector<ConeGroup> groups;
  int n_rows = 0;
};

// Projection onto K: bilateral groups pass through, nonnegative groups clamp
// componentwise, second-order groups use the analytic three-case formula.
Eigen::VectorXd project_cone(const Eigen::VectorXd& w, const ConeProduct& cones);

// De Saxce correction: zero except on second-order groups, where the normal
// component becomes mu * |tangential part of v|.
Eigen::VectorXd desaxce_shift(const Eigen::VectorXd& v, const ConeProduct& cones);

}  // namespace loopdyn
