#include "loopdyn/stepper.hpp"

#include <algorithm>
#include <cmath>

namespace loopdyn {

namespace {

VectorXd stack_twists(std::span<const Twist> twists) {
  VectorXd u(6 * twists.size());
  for (size_t b = 0; b < twists.size(); ++b) {
    u.segment<3>(6 * b) = twists[b].linear;
    u.segment<3>(6 * b + 3) = twists[b].angular;
  }
  return u;
}

PadmmInit gather_warmstart(const WorldState& state, const ConstraintSet& cs,
                           const Preconditioner& precond) {
  PadmmInit init;
  VectorXd x0 = VectorXd::Zero(cs.n_rows);
  VectorXd z0 = VectorXd::Zero(cs.n_rows);
  const int n_jd = cs.n_bilateral + cs.n_dynamics;
  if (state.joint_cache.valid && state.joint_cache.lambda.size() == n_jd) {
    x0.head(n_jd) = state.joint_cache.lambda;
    z0.head(n_jd) = state.joint_cache.z;
  }
  for (int k = 0; k < cs.n_limits; ++k) {
    auto it = state.limit_cache.entries.find(cs.limit_keys[k]);
    if (it != state.limit_cache.entries.end()) {
      x0[cs.first_limit_row() + k] = it->second.first;
      z0[cs.first_limit_row() + k] = it->second.second;
    }
  }
  const std::vector<ContactInit> matched = match_warmstart(state.contact_cache, cs.contacts);
  for (size_t c = 0; c < cs.contacts.size(); ++c) {
    const int r = cs.first_contact_row() + 3 * static_cast<int>(c);
    x0.segment<3>(r) = matched[c].impulse;
    z0.segment<3>(r) = matched[c].dual;
  }
  // Into the preconditioned space: lambda = P lambda~, z~ = P z.
  init.x0 = x0.cwiseQuotient(precond.scale);
  init.z0 = z0.cwiseProduct(precond.scale);
  return init;
}

void store_caches(WorldState& state, const ConstraintSet& cs, const VectorXd& lambda,
                  const VectorXd& z) {
  const int n_jd = cs.n_bilateral + cs.n_dynamics;
  state.joint_cache.lambda = lambda.head(n_jd);
  state.joint_cache.z = z.head(n_jd);
  state.joint_cache.valid = true;
  state.limit_cache.entries.clear();
  for (int k = 0; k < cs.n_limits; ++k) {
    const int r = cs.first_limit_row() + k;
    state.limit_cache.entries[cs.limit_keys[k]] = {lambda[r], z[r]};
  }
  state.contact_cache.entries.clear();
  for (size_t c = 0; c < cs.contacts.size(); ++c) {
    const int r = cs.first_contact_row() + 3 * static_cast<int>(c);
    ReactionCacheEntry entry;
    entry.geom_a = cs.contacts[c].geom_a;
    entry.geom_b = cs.contacts[c].geom_b;
    entry.position = cs.contacts[c].position;
    entry.impulse = lambda.segment<3>(r);
    entry.dual = z.segment<3>(r);
    state.contact_cache.entries.push_back(entry);
  }
}

}  // namespace

void apply_scene_config(StepConfig& config, const SceneConfig& overrides) {
  if (overrides.dt) config.dt = *overrides.dt;
  if (overrides.integrator) {
    config.integrator = *overrides.integrator == "moreau" ? Integrator::MoreauJean
                                                          : Integrator::SemiImplicitEuler;
  }
  if (overrides.backend) {
    if (*overrides.backend == "dense") {
      config.backend = BackendChoice::Dense;
    } else if (*overrides.backend == "sparse") {
      config.backend = BackendChoice::MatrixFree;
    } else {
      config.backend = BackendChoice::Auto;
    }
  }
  if (overrides.beta) config.baumgarte_beta = *overrides.beta;
  if (overrides.rho) config.solver.rho = *overrides.rho;
  if (overrides.eta) config.solver.eta = *overrides.eta;
  if (overrides.eps) config.solver.eps = *overrides.eps;
  if (overrides.max_iters) config.solver.max_iters = *overrides.max_iters;
  if (overrides.cr_iters) config.cr_iters = *overrides.cr_iters;
}

WorldState initial_state(const MechanismModel& model) {
  WorldState s;
  s.poses.reserve(model.bodies.size());
  s.twists.reserve(model.bodies.size());
  for (const BodySpec& b : model.bodies) {
    s.poses.push_back(b.initial_pose);
    s.twists.push_back(b.initial_twist);
  }
  return s;
}

VectorXd free_forces(const MechanismModel& model, std::span<const Pose> poses,
                     std::span<const Twist> twists, std::span<const Vector6> external) {
  const int nb = model.n_bodies();
  VectorXd h(6 * nb);
  for (int b = 0; b < nb; ++b) {
    const InertiaBlock& in = model.bodies[b].inertia;
    const Vec3 w = twists[b].angular;
    const Mat3 iw = world_inertia(in, poses[b].orientation);
    h.segment<3>(6 * b) = in.mass * model.gravity;
    h.segment<3>(6 * b + 3) = -w.cross(iw * w);
    if (!external.empty()) h.segment<6>(6 * b) += external[b];
  }
  return h;
}

VectorXd free_velocity(const ConstraintSet& cs, const VectorXd& h, std::span<const Twist> twists,
                       double dt, std::span<const BodyInertiaWorld> inertias) {
  VectorXd ufree(6 * cs.n_bodies);
  for (int b = 0; b < cs.n_bodies; ++b) {
    ufree.segment<3>(6 * b) = twists[b].linear + dt * inertias[b].inv_mass * h.segment<3>(6 * b);
    ufree.segment<3>(6 * b + 3) =
        twists[b].angular + dt * (inertias[b].inv_inertia_world * h.segment<3>(6 * b + 3));
  }
  return cs.apply_jacobian(ufree) - cs.bias;
}

StepDiagnostics step(const MechanismModel& model, WorldState& state, const StepConfig& config) {
  StepDiagnostics diag;
  const int nb = model.n_bodies();
  const double dt = config.dt;

  // Moreau-Jean evaluates constraints, Jacobians and M at the half-step
  // configuration; h stays at the start-of-step state.
  std::vector<Pose> eval_poses(state.poses);
  if (config.integrator == Integrator::MoreauJean) {
    for (int b = 0; b < nb; ++b) {
      eval_poses[b].position += 0.5 * dt * state.twists[b].linear;
      const Vec3 w_body =
          eval_poses[b].orientation.toRotationMatrix().transpose() * state.twists[b].angular;
      eval_poses[b].orientation = quat_integrate(eval_poses[b].orientation, w_body, 0.5 * dt);
    }
  }

  const std::vector<ContactPoint> contacts = collide(model, eval_poses, config.contact_margin);
  const ConstraintSet cs =
      assemble_constraints(model, eval_poses, state.twists, contacts, config.assemble_config());
  const std::vector<BodyInertiaWorld> inertias = world_inertias(model, eval_poses);
  const VectorXd h = free_forces(model, state.poses, state.twists);
  const VectorXd u_minus = stack_twists(state.twists);

  VectorXd ufree(6 * nb);
  for (int b = 0; b < nb; ++b) {
    ufree.segment<3>(6 * b) =
        state.twists[b].linear + dt * inertias[b].inv_mass * h.segment<3>(6 * b);
    ufree.segment<3>(6 * b + 3) =
        state.twists[b].angular + dt * (inertias[b].inv_inertia_world * h.segment<3>(6 * b + 3));
  }

  diag.n_rows = cs.n_rows;
  diag.contact_count = static_cast<int>(contacts.size());
  diag.first_contact_row = cs.first_contact_row();
  diag.f_inf = cs.n_bilateral > 0 ? cs.bilateral_f.lpNorm<Eigen::Infinity>() : 0.0;

  VectorXd u_plus = ufree;
  VectorXd lambda = VectorXd::Zero(cs.n_rows);
  if (cs.n_rows > 0) {
    const Preconditioner precond = jacobi_preconditioner(cs, inertias);
    const VectorXd v_f = cs.apply_jacobian(ufree) - cs.bias;
    const VectorXd v_f_scaled = precond.scale.cwiseProduct(v_f);
    const double eta_rho = config.solver.eta + config.solver.rho;
    const DelassusBackend backend =
        build_backend(cs, inertias, precond, eta_rho, config.backend, config.cr_iters);
    PadmmInit init;
    if (config.warm_start) init = gather_warmstart(state, cs, precond);
    const PadmmResult solved = padmm_solve(backend, v_f_scaled, cs.cones, init, config.solver);
    diag.solver = solved.diagnostics;

    lambda = precond.scale.cwiseProduct(solved.lambda);
    const VectorXd z_phys = solved.z.cwiseQuotient(precond.scale);
    store_caches(state, cs, lambda, z_phys);

    const VectorXd wrench = cs.apply_jacobian_transpose(lambda);
    for (int b = 0; b < nb; ++b) {
      u_plus.segment<3>(6 * b) += inertias[b].inv_mass * wrench.segment<3>(6 * b);
      u_plus.segment<3>(6 * b + 3) += inertias[b].inv_inertia_world * wrench.segment<3>(6 * b + 3);
    }

    // Second KKT row on the bilateral segment, J u+ + R lambda = v*, measured
    // at the preconditioned scale the solver converges in.
    const VectorXd ju = cs.apply_jacobian(u_plus);
    double worst = 0.0;
    for (int rr = 0; rr < cs.n_bilateral + cs.n_dynamics; ++rr) {
      worst = std::max(worst, precond.scale[rr] *
                                  std::abs(ju[rr] + cs.reg[rr] * lambda[rr] - cs.bias[rr]));
    }
    diag.bilateral_velocity_inf = worst;
  }
  diag.impulses = lambda;

  // First KKT row: M (u+ - u-) = dt h + J^T lambda.
  {
    VectorXd momentum = -dt * h - cs.apply_jacobian_transpose(lambda);
    for (int b = 0; b < nb; ++b) {
      momentum.segment<3>(6 * b) += inertias[b].mass * (u_plus - u_minus).segment<3>(6 * b);
      momentum.segment<3>(6 * b + 3) +=
          inertias[b].inertia_world * (u_plus - u_minus).segment<3>(6 * b + 3);
    }
    diag.kkt_momentum_inf = momentum.lpNorm<Eigen::Infinity>();
  }

  // Explicit pose integration from the start-of-step poses: a full dt with u+
  // for semi-implicit Euler, the midpoint rule dt/2 (u- + u+) for Moreau-Jean.
  const bool midpoint = config.integrator == Integrator::MoreauJean;
  for (int b = 0; b < nb; ++b) {
    state.twists[b].linear = u_plus.segment<3>(6 * b);
    state.twists[b].angular = u_plus.segment<3>(6 * b + 3);
    const Vec3 v_int = midpoint
                           ? Vec3(0.5 * (u_minus.segment<3>(6 * b) + u_plus.segment<3>(6 * b)))
                           : state.twists[b].linear;
    const Vec3 w_int =
        midpoint ? Vec3(0.5 * (u_minus.segment<3>(6 * b + 3) + u_plus.segment<3>(6 * b + 3)))
                 : state.twists[b].angular;
    state.poses[b].position += dt * v_int;
    const Vec3 w_body = state.poses[b].orientation.toRotationMatrix().transpose() * w_int;
    state.poses[b].orientation = quat_integrate(state.poses[b].orientation, w_body, dt);
  }
  state.time += dt;
  return diag;
}

double kinetic_energy(const MechanismModel& model, const WorldState& state) {
  double e = 0.0;
  for (int b = 0; b < model.n_bodies(); ++b) {
    const InertiaBlock& in = model.bodies[b].inertia;
    const Mat3 iw = world_inertia(in, state.poses[b].orientation);
    e += 0.5 * in.mass * state.twists[b].linear.squaredNorm();
    e += 0.5 * state.twists[b].angular.dot(iw * state.twists[b].angular);
  }
  return e;
}

double potential_energy(const MechanismModel& model, const WorldState& state) {
  double e = 0.0;
  for (int b = 0; b < model.n_bodies(); ++b) {
    e -= model.bodies[b].inertia.mass * model.gravity.dot(state.poses[b].position);
  }
  return e;
}

}  // namespace loopdyn
