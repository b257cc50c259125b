#pragma once

#include <map>
#include <span>
#include <vector>

#include "loopdyn/contacts.hpp"
#include "loopdyn/delassus.hpp"
#include "loopdyn/model.hpp"
#include "loopdyn/padmm.hpp"

namespace loopdyn {

enum class Integrator { SemiImplicitEuler, MoreauJean };

struct StepConfig {
  double dt = 1.0 / 240.0;
  Integrator integrator = Integrator::SemiImplicitEuler;
  BackendChoice backend = BackendChoice::Auto;
  PadmmConfig solver;
  int cr_iters = 9;  // inner budget per PADMM iteration, matrix-free path
  double baumgarte_beta = 0.2;
  double contact_margin = 0.01;
  double impact_velocity_threshold = 0.1;
  double bias_clamp = 10.0;
  double limit_margin_angular = 0.01;
  double limit_margin_linear = 0.001;
  bool warm_start = true;

  AssembleConfig assemble_config() const {
    return {dt,          baumgarte_beta,       bias_clamp,
            limit_margin_angular, limit_margin_linear, impact_velocity_threshold};
  }
};

// Converged reactions of the bilateral + joint-dynamics rows; row identity is
// stable, so these carry over by position.
struct JointReactionCache {
  VectorXd lambda;
  VectorXd z;
  bool valid = false;
};

// Limit rows appear and disappear with the active set; keyed (joint, bound).
struct LimitReactionCache {
  std::map<std::pair<int, int>, std::pair<double, double>> entries;  // -> (lambda, z)
};

struct WorldState {
  std::vector<Pose> poses;
  std::vector<Twist> twists;
  double time = 0.0;
  JointReactionCache joint_cache;
  LimitReactionCache limit_cache;
  ReactionCache contact_cache;
};

WorldState initial_state(const MechanismModel& model);

// Merge a scene's config overrides into a step configuration.
void apply_scene_config(StepConfig& config, const SceneConfig& overrides);

struct StepDiagnostics {
  SolveDiagnostics solver;
  int n_rows = 0;
  int contact_count = 0;
  int first_contact_row = 0;
  VectorXd impulses;   // converged reactions, physical scale, row layout of the set
  double f_inf = 0.0;  // structural residual at the evaluation configuration
  double kkt_momentum_inf = 0.0;  // |M du - dt h - J^T lambda|_inf
  // |P (J u+ + R lambda - v*)|_inf over the bilateral rows (preconditioned
  // scale, the metric the solver tolerance applies to).
  double bilateral_velocity_inf = 0.0;
};

// h(q, u): gravity, gyroscopic torque -w x (I_w w), and external wrenches.
VectorXd free_forces(const MechanismModel& model, std::span<const Pose> poses,
                     std::span<const Twist> twists, std::span<const Vector6> external = {});

// v_f = J (u- + dt M^-1 h) - v*.
VectorXd free_velocity(const ConstraintSet& cs, const VectorXd& h, std::span<const Twist> twists,
                       double dt, std::span<const BodyInertiaWorld> inertias);

StepDiagnostics step(const MechanismModel& model, WorldState& state, const StepConfig& config);

double kinetic_energy(const MechanismModel& model, const WorldState& state);
double potential_energy(const MechanismModel& model, const WorldState& state);

}  // namespace loopdyn
