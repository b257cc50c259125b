#pragma once

// Independent numerical oracles used by the unit and acceptance suites. These
// deliberately avoid the library's analytic formulas.

#include <cmath>
#include <optional>

#include <Eigen/Dense>

namespace oracles {

// Projection onto the Coulomb cone {(n, t): |t| <= mu n} by numerical
// minimization of |p - w|^2: the minimizer is either w itself (feasible) or
// lies on the boundary ray (tau, mu tau t_hat), tau >= 0, which is searched by
// golden section.
inline Eigen::Vector3d cone_project(const Eigen::Vector3d& w, double mu) {
  const double wn = w[0];
  const Eigen::Vector2d wt(w[1], w[2]);
  const double tnorm = wt.norm();
  if (tnorm <= mu * wn) return w;  // feasibility check only, no projection math

  auto objective = [&](double tau) {
    const double dn = tau - wn;
    const double dt = mu * tau - tnorm;
    return dn * dn + dt * dt;
  };
  double lo = 0.0;
  double hi = 2.0 * (std::abs(wn) + tnorm + 1.0) * (1.0 + mu);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 300; ++it) {
    const double m1 = hi - gr * (hi - lo);
    const double m2 = lo + gr * (hi - lo);
    if (objective(m1) < objective(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  double tau = 0.5 * (lo + hi);
  if (objective(0.0) <= objective(tau)) tau = 0.0;
  Eigen::Vector3d p;
  p[0] = tau;
  if (tnorm > 0) {
    p[1] = mu * tau * wt[0] / tnorm;
    p[2] = mu * tau * wt[1] / tnorm;
  } else {
    p[1] = p[2] = 0.0;
  }
  return p;
}

// Closed-form planar four-bar position solution via circle-circle
// intersection. Angles are absolute, measured from +x in the plane.
struct FourbarSolution {
  double coupler_angle;
  double rocker_angle;
  Eigen::Vector2d b;
};

inline std::optional<FourbarSolution> solve_fourbar(double crank_angle, double ground = 2.0,
                                                    double crank = 0.5, double coupler = 2.0,
                                                    double rocker = 1.5, int branch = +1) {
  const Eigen::Vector2d p1(0, 0), p2(ground, 0);
  const Eigen::Vector2d a = p1 + crank * Eigen::Vector2d(std::cos(crank_angle), std::sin(crank_angle));
  const Eigen::Vector2d delta = p2 - a;
  const double d = delta.norm();
  if (d > coupler + rocker || d < std::abs(coupler - rocker)) return std::nullopt;
  const double alpha = (d * d + coupler * coupler - rocker * rocker) / (2.0 * d);
  const double h2 = coupler * coupler - alpha * alpha;
  const double h = std::sqrt(std::max(0.0, h2));
  const Eigen::Vector2d u = delta / d;
  const Eigen::Vector2d perp(-u.y(), u.x());
  FourbarSolution sol;
  sol.b = a + alpha * u + branch * h * perp;
  sol.coupler_angle = std::atan2(sol.b.y() - a.y(), sol.b.x() - a.x());
  sol.rocker_angle = std::atan2(sol.b.y() - p2.y(), sol.b.x() - p2.x());
  return sol;
}

}  // namespace oracles
