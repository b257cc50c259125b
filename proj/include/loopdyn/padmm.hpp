#pragma once

#include "loopdyn/cones.hpp"
#include "loopdyn/delassus.hpp"

namespace loopdyn {

struct PadmmConfig {
  double eta = 1e-6;  // proximal parameter
  double rho = 0.1;   // penalty, in the preconditioned space
  double eps = 1e-6;  // tolerance on max(r_p, r_d, r_c)
  int max_iters = 200;
  bool acceleration = true;
  bool restart = true;
  // Run exactly max_iters with no convergence exit (deterministic timing).
  bool fixed_iteration_mode = false;
};

struct SolveDiagnostics {
  int iterations = 0;
  double r_p = 0.0;
  double r_d = 0.0;
  double r_c = 0.0;
  int restarts = 0;
  bool converged = true;
  long cr_iterations = 0;
  bool cr_breakdown = false;
};

struct PadmmState {
  VectorXd x, y, z;        // impulse iterate, cone-feasible consensus, scaled dual
  VectorXd s;              // De Saxce shift
  VectorXd y_prev, z_prev; // extrapolation memory (raw iterates)
  VectorXd y_hat, z_hat;   // extrapolated values used by the next iteration
  double a = 1.0;          // Nesterov coefficient
  double r_p = 0.0, r_d = 0.0, r_c = 0.0;
  int iteration = 0;
  int restarts = 0;
};

struct PadmmInit {
  VectorXd x0;  // empty -> zeros
  VectorXd z0;
};

struct PadmmResult {
  VectorXd lambda;  // y at exit
  VectorXd z;       // dual at exit
  SolveDiagnostics diagnostics;
};

double nesterov_next_coefficient(double a);

// Extrapolates (y, z) from the stored raw iterates, or clears the momentum on
// restart. Leaves y itself untouched; only the hat variables move.
void nesterov_update(PadmmState& state, bool restart_triggered);

// r_p = |x - y|_inf, r_d = rho |y - y_prev|_inf, r_c = groupwise
// min(|y_g|_inf, |z_g|_inf), bilateral groups contributing zero.
void padmm_residuals(const VectorXd& x, const VectorXd& y, const VectorXd& y_prev,
                     const VectorXd& z, double rho, const ConeProduct& cones, double& r_p,
                     double& r_d, double& r_c);

PadmmResult padmm_solve(const DelassusBackend& backend, const VectorXd& v_f,
                        const ConeProduct& cones, const PadmmInit& init,
                        const PadmmConfig& config,
                        std::vector<double>* combined_history = nullptr);

}  // namespace loopdyn
