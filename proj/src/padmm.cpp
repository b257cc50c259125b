#include "loopdyn/padmm.hpp"

#include <cmath>
#include <limits>

namespace loopdyn {

using Eigen::VectorXd;

VectorXd project_cone(const VectorXd& w, const ConeProduct& cones) {
  VectorXd y = w;
  for (const ConeGroup& g : cones.groups) {
    switch (g.kind) {
      case ConeGroup::Kind::Bilateral:
        break;
      case ConeGroup::Kind::Nonnegative:
        for (int k = 0; k < g.dim; ++k) y[g.begin + k] = std::max(0.0, y[g.begin + k]);
        break;
      case ConeGroup::Kind::SecondOrder: {
        const double wn = w[g.begin];
        const Eigen::Vector2d wt(w[g.begin + 1], w[g.begin + 2]);
        const double tn = wt.norm();
        if (tn <= g.mu * wn) break;  // inside
        if (g.mu * tn <= -wn) {      // polar cone
          y.segment<3>(g.begin).setZero();
          break;
        }
        const double tau = (wn + g.mu * tn) / (1.0 + g.mu * g.mu);
        y[g.begin] = tau;
        if (tn > 0) {
          y[g.begin + 1] = g.mu * tau * wt.x() / tn;
          y[g.begin + 2] = g.mu * tau * wt.y() / tn;
        } else {
          y[g.begin + 1] = 0;
          y[g.begin + 2] = 0;
        }
        break;
      }
    }
  }
  return y;
}

VectorXd desaxce_shift(const VectorXd& v, const ConeProduct& cones) {
  VectorXd s = VectorXd::Zero(v.size());
  for (const ConeGroup& g : cones.groups) {
    if (g.kind != ConeGroup::Kind::SecondOrder) continue;
    const double tn = std::hypot(v[g.begin + 1], v[g.begin + 2]);
    s[g.begin] = g.mu * tn;
  }
  return s;
}

double nesterov_next_coefficient(double a) {
  return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
}

void nesterov_update(PadmmState& state, bool restart_triggered) {
  if (restart_triggered) {
    state.a = 1.0;
    state.y_hat = state.y;
    state.z_hat = state.z;
    ++state.restarts;
    return;
  }
  const double a_next = nesterov_next_coefficient(state.a);
  const double beta = (state.a - 1.0) / a_next;
  state.y_hat = state.y + beta * (state.y - state.y_prev);
  state.z_hat = state.z + beta * (state.z - state.z_prev);
  state.a = a_next;
}

void padmm_residuals(const VectorXd& x, const VectorXd& y, const VectorXd& y_prev,
                     const VectorXd& z, double rho, const ConeProduct& cones, double& r_p,
                     double& r_d, double& r_c) {
  r_p = (x - y).lpNorm<Eigen::Infinity>();
  r_d = rho * (y - y_prev).lpNorm<Eigen::Infinity>();
  r_c = 0.0;
  for (const ConeGroup& g : cones.groups) {
    if (g.kind == ConeGroup::Kind::Bilateral) continue;
    const double yn = y.segment(g.begin, g.dim).lpNorm<Eigen::Infinity>();
    const double zn = z.segment(g.begin, g.dim).lpNorm<Eigen::Infinity>();
    r_c = std::max(r_c, std::min(yn, zn));
  }
}

PadmmResult padmm_solve(const DelassusBackend& backend, const VectorXd& v_f,
                        const ConeProduct& cones, const PadmmInit& init,
                        const PadmmConfig& config,
                        std::vector<double>* combined_history) {
  const int n = static_cast<int>(v_f.size());
  PadmmResult result;
  if (n == 0) {
    result.lambda.resize(0);
    result.z.resize(0);
    return result;
  }

  const double eta = config.eta;
  const double rho = config.rho;

  PadmmState st;
  st.x = init.x0.size() == n ? init.x0 : VectorXd::Zero(n);
  st.z = init.z0.size() == n ? init.z0 : VectorXd::Zero(n);
  st.y = project_cone(st.x, cones);
  st.y_prev = st.y;
  st.z_prev = st.z;
  st.y_hat = st.y;
  st.z_hat = st.z;

  double prev_combined = std::numeric_limits<double>::infinity();
  VectorXd rhs(n);
  bool converged = false;

  for (st.iteration = 1; st.iteration <= config.max_iters; ++st.iteration) {
    st.s = desaxce_shift(st.z_hat, cones);
    rhs = -(v_f + st.s - eta * st.x - rho * st.y_hat - st.z_hat);
    backend.solve(rhs, st.x);

    const VectorXd y_new = project_cone(st.x - st.z_hat / rho, cones);
    const VectorXd z_new = st.z_hat - rho * (st.x - y_new);

    padmm_residuals(st.x, y_new, st.y, z_new, rho, cones, st.r_p, st.r_d, st.r_c);
    const double combined = std::max({st.r_p, st.r_d, st.r_c});
    if (combined_history) combined_history->push_back(combined);

    st.y_prev = st.y;
    st.z_prev = st.z;
    st.y = y_new;
    st.z = z_new;

    if (!config.fixed_iteration_mode && combined < config.eps) {
      converged = true;
      break;
    }

    if (config.acceleration) {
      const bool restart_now = config.restart && combined > prev_combined;
      nesterov_update(st, restart_now);
    } else {
      st.y_hat = st.y;
      st.z_hat = st.z;
    }
    prev_combined = combined;
  }

  result.lambda = st.y;
  result.z = st.z;
  result.diagnostics.iterations = std::min(st.iteration, config.max_iters);
  result.diagnostics.r_p = st.r_p;
  result.diagnostics.r_d = st.r_d;
  result.diagnostics.r_c = st.r_c;
  result.diagnostics.restarts = st.restarts;
  result.diagnostics.converged =
      converged || std::max({st.r_p, st.r_d, st.r_c}) < config.eps;
  result.diagnostics.cr_iterations = backend.cr_iterations_total;
  result.diagnostics.cr_breakdown = backend.cr_breakdown;
  return result;
}

}  // namespace loopdyn
