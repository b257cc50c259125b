#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "loopdyn/batch.hpp"
#include "loopdyn/fk.hpp"
#include "loopdyn/model.hpp"
#include "loopdyn/scene.hpp"
#include "loopdyn/stepper.hpp"

namespace {

using loopdyn::BackendChoice;
using loopdyn::Integrator;
using loopdyn::MechanismModel;
using loopdyn::SceneDescription;
using loopdyn::StepConfig;
using loopdyn::StepDiagnostics;
using loopdyn::WorldState;
using nlohmann::json;

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point begin) {
  return std::chrono::duration<double>(Clock::now() - begin).count();
}

struct SolverFlags {
  double dt = 0;
  std::string integrator;
  std::string backend;
  double beta = 0;
  double rho = 0;
  double eta = 0;
  double eps = 0;
  int max_iters = 0;
  int cr_iters = 0;
  bool fixed_iters = false;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--dt", f.dt, "timestep in seconds");
  cmd->add_option("--integrator", f.integrator, "euler | moreau")
      ->check(CLI::IsMember({"euler", "moreau"}));
  cmd->add_option("--backend", f.backend, "dense | sparse | auto")
      ->check(CLI::IsMember({"dense", "sparse", "auto"}));
  cmd->add_option("--beta", f.beta, "Baumgarte coefficient");
  cmd->add_option("--rho", f.rho, "ADMM penalty");
  cmd->add_option("--eta", f.eta, "proximal parameter");
  cmd->add_option("--eps", f.eps, "convergence tolerance");
  cmd->add_option("--max-iters", f.max_iters, "PADMM iteration cap");
  cmd->add_option("--cr-iters", f.cr_iters, "CR budget per linear solve");
  cmd->add_flag("--fixed-iters", f.fixed_iters, "run exactly max-iters, no convergence exit");
}

Integrator parse_integrator(const std::string& s) {
  return s == "moreau" ? Integrator::MoreauJean : Integrator::SemiImplicitEuler;
}

BackendChoice parse_backend(const std::string& s) {
  if (s == "dense") return BackendChoice::Dense;
  if (s == "sparse") return BackendChoice::MatrixFree;
  return BackendChoice::Auto;
}

StepConfig make_config(const SceneDescription& scene, const CLI::App* cmd, const SolverFlags& f) {
  StepConfig cfg;
  loopdyn::apply_scene_config(cfg, scene.config);

  if (cmd->count("--dt")) cfg.dt = f.dt;
  if (cmd->count("--integrator")) cfg.integrator = parse_integrator(f.integrator);
  if (cmd->count("--backend")) cfg.backend = parse_backend(f.backend);
  if (cmd->count("--beta")) cfg.baumgarte_beta = f.beta;
  if (cmd->count("--rho")) cfg.solver.rho = f.rho;
  if (cmd->count("--eta")) cfg.solver.eta = f.eta;
  if (cmd->count("--eps")) cfg.solver.eps = f.eps;
  if (cmd->count("--max-iters")) cfg.solver.max_iters = f.max_iters;
  if (cmd->count("--cr-iters")) cfg.cr_iters = f.cr_iters;
  if (f.fixed_iters) cfg.solver.fixed_iteration_mode = true;
  return cfg;
}

json vec3_json(const loopdyn::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json body_json(const loopdyn::Pose& pose, const loopdyn::Twist& twist) {
  json b;
  b["position"] = vec3_json(pose.position);
  b["orientation"] = json::array(
      {pose.orientation.w(), pose.orientation.x(), pose.orientation.y(), pose.orientation.z()});
  b["linear_velocity"] = vec3_json(twist.linear);
  b["angular_velocity"] = vec3_json(twist.angular);
  return b;
}

json step_record(const MechanismModel& model, const WorldState& state,
                 const StepDiagnostics& diag) {
  json rec;
  rec["type"] = "step";
  rec["time"] = state.time;
  rec["bodies"] = json::array();
  for (size_t b = 0; b < state.poses.size(); ++b) {
    rec["bodies"].push_back(body_json(state.poses[b], state.twists[b]));
  }
  json coords = json::object();
  for (size_t j = 0; j < model.joints.size(); ++j) {
    const auto type = model.joints[j].type;
    if (type == loopdyn::JointType::Revolute || type == loopdyn::JointType::Prismatic) {
      coords[model.joints[j].name] = joint_coordinate(model, static_cast<int>(j), state.poses);
    }
  }
  rec["joints"] = coords;
  rec["f_inf"] = diag.f_inf;
  rec["contacts"] = diag.contact_count;
  rec["solver"] = {{"iterations", diag.solver.iterations},
                   {"r_p", diag.solver.r_p},
                   {"r_d", diag.solver.r_d},
                   {"r_c", diag.solver.r_c},
                   {"restarts", diag.solver.restarts},
                   {"converged", diag.solver.converged},
                   {"cr_iterations", diag.solver.cr_iterations}};
  return rec;
}

int run_simulate(const std::string& scene_path, double duration, const std::string& output,
                 int emit_every, long seed, const CLI::App* cmd, const SolverFlags& flags) {
  const SceneDescription scene = loopdyn::load_scene_file(scene_path);
  const MechanismModel model = loopdyn::build_model(scene);
  const StepConfig cfg = make_config(scene, cmd, flags);
  WorldState state = loopdyn::initial_state(model);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!output.empty() && output != "-") {
    file.open(output);
    if (!file) {
      std::cerr << "cannot open output file: " << output << "\n";
      return 1;
    }
    out = &file;
  }

  const long n_steps = std::lround(duration / cfg.dt);
  double max_f_inf = 0.0;
  double max_kkt = 0.0;
  double sum_iters = 0.0;
  const auto begin = Clock::now();
  for (long k = 0; k < n_steps; ++k) {
    const StepDiagnostics diag = loopdyn::step(model, state, cfg);
    max_f_inf = std::max(max_f_inf, diag.f_inf);
    max_kkt = std::max(max_kkt, diag.kkt_momentum_inf);
    sum_iters += diag.solver.iterations;
    if (emit_every > 0 && ((k + 1) % emit_every == 0 || k + 1 == n_steps)) {
      *out << step_record(model, state, diag).dump() << "\n";
    }
  }
  const double wall = elapsed_s(begin);

  json summary;
  summary["type"] = "summary";
  summary["scene"] = model.name;
  summary["bodies"] = model.n_bodies();
  summary["kinematic_loops"] = model.n_loops;
  summary["steps"] = n_steps;
  summary["wall_s"] = wall;
  summary["steps_per_s"] = wall > 0 ? n_steps / wall : 0.0;
  summary["max_f_inf"] = max_f_inf;
  summary["max_kkt_momentum_inf"] = max_kkt;
  summary["mean_padmm_iterations"] = n_steps > 0 ? sum_iters / n_steps : 0.0;
  summary["final_time"] = state.time;
  summary["seed"] = seed;
  summary["final_bodies"] = json::array();
  for (size_t b = 0; b < state.poses.size(); ++b) {
    summary["final_bodies"].push_back(body_json(state.poses[b], state.twists[b]));
  }
  *out << summary.dump() << "\n";
  return 0;
}

int run_bench(const std::vector<std::string>& scene_paths, const std::vector<int>& world_counts,
              int steps, int threads, long seed, const CLI::App* cmd, const SolverFlags& flags) {
  if (steps <= 0) return 0;  // empty table
  std::vector<std::shared_ptr<const MechanismModel>> models;
  StepConfig cfg;
  for (size_t i = 0; i < scene_paths.size(); ++i) {
    const SceneDescription scene = loopdyn::load_scene_file(scene_paths[i]);
    models.push_back(std::make_shared<MechanismModel>(loopdyn::build_model(scene)));
    if (i == 0) cfg = make_config(scene, cmd, flags);
  }

  for (int worlds : world_counts) {
    loopdyn::WorldBatch batch;
    std::mt19937_64 rng(static_cast<unsigned long>(seed));
    std::normal_distribution<double> jitter(0.0, 1e-3);
    for (int w = 0; w < worlds; ++w) {
      const auto& model = models[w % models.size()];
      WorldState state = loopdyn::initial_state(*model);
      if (seed != 0) {
        for (auto& twist : state.twists) {
          for (int k = 0; k < 3; ++k) {
            twist.linear[k] += jitter(rng);
            twist.angular[k] += jitter(rng);
          }
        }
      }
      batch.add_world(model, state);
    }
    loopdyn::batch_step(batch, cfg, threads);  // untimed warm-up pass
    const auto begin = Clock::now();
    for (int k = 0; k < steps; ++k) loopdyn::batch_step(batch, cfg, threads);
    const double wall = elapsed_s(begin);

    // Rough per-world footprint from the minimal problem size (no contacts or
    // active limits): state + rows + backend storage.
    double mem = 0.0;
    for (int w = 0; w < worlds; ++w) {
      const MechanismModel& m = batch.model(w);
      const double n_rows = m.n_bilateral_rows + m.n_dynamics_rows;
      const double body_state = 13.0 * m.n_bodies();
      const double rows = 24.0 * n_rows;
      const bool dense = cfg.backend == BackendChoice::Dense ||
                         (cfg.backend == BackendChoice::Auto && n_rows <= loopdyn::kDenseRowCrossover);
      const double backend = dense ? n_rows * n_rows : 48.0 * n_rows;
      mem += 8.0 * (body_state + rows + backend + 10.0 * n_rows);
    }
    json row;
    row["type"] = "bench";
    row["scenes"] = scene_paths;
    row["worlds"] = worlds;
    row["steps"] = steps;
    row["wall_s"] = wall;
    row["throughput_steps_per_s"] = wall > 0 ? static_cast<double>(steps) * worlds / wall : 0.0;
    row["per_world_mem_bytes_est"] = worlds > 0 ? mem / worlds : 0.0;
    row["seed"] = seed;
    std::cout << row.dump() << "\n";
  }
  return 0;
}

int run_fk(const std::string& scene_path, const std::vector<std::string>& target_args,
           double tolerance, int max_iters) {
  const SceneDescription scene = loopdyn::load_scene_file(scene_path);
  const MechanismModel model = loopdyn::build_model(scene);
  loopdyn::FkProblem problem;
  problem.model = &model;
  for (const std::string& t : target_args) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      std::cerr << "bad --target '" << t << "', expected name=value\n";
      return 1;
    }
    const std::string name = t.substr(0, eq);
    const int joint = model.joint_index(name);
    if (joint < 0) {
      std::cerr << "unknown joint '" << name << "'\n";
      return 1;
    }
    problem.targets.emplace_back(joint, std::stod(t.substr(eq + 1)));
  }
  const WorldState init = loopdyn::initial_state(model);
  problem.initial_poses = init.poses;

  loopdyn::FkConfig fk_cfg;
  fk_cfg.tolerance = tolerance;
  fk_cfg.max_iters = max_iters;
  const loopdyn::FkResult result = loopdyn::fk_solve(problem, fk_cfg);

  json doc;
  doc["type"] = "fk";
  doc["scene"] = model.name;
  doc["converged"] = result.converged;
  doc["iterations"] = result.iterations;
  doc["residual_inf"] = result.residual_inf;
  doc["bodies"] = json::array();
  for (size_t b = 0; b < result.poses.size(); ++b) {
    json jb;
    jb["name"] = model.bodies[b].name;
    jb["position"] = vec3_json(result.poses[b].position);
    const auto& q = result.poses[b].orientation;
    jb["orientation"] = json::array({q.w(), q.x(), q.y(), q.z()});
    doc["bodies"].push_back(jb);
  }
  json coords = json::object();
  for (size_t j = 0; j < model.joints.size(); ++j) {
    const auto type = model.joints[j].type;
    if (type == loopdyn::JointType::Revolute || type == loopdyn::JointType::Prismatic) {
      coords[model.joints[j].name] = joint_coordinate(model, static_cast<int>(j), result.poses);
    }
  }
  doc["joints"] = coords;
  std::cout << doc.dump(2) << "\n";
  return result.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loopdyn: constraint-based rigid-body dynamics in maximal coordinates"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a scene and emit trajectory records");
  std::string sim_scene;
  double duration = 1.0;
  std::string output;
  int emit_every = 1;
  long sim_seed = 0;
  SolverFlags sim_flags;
  sim->add_option("scene", sim_scene, "scene file")->required();
  sim->add_option("--duration", duration, "simulated seconds");
  sim->add_option("--output", output, "output path ('-' or empty for stdout)");
  sim->add_option("--emit-every", emit_every, "record stride in steps (0: summary only)");
  sim->add_option("--seed", sim_seed, "recorded seed (simulate uses no randomness)");
  add_solver_flags(sim, sim_flags);

  // bench
  auto* bench = app.add_subcommand("bench", "throughput over world counts");
  std::vector<std::string> bench_scenes;
  std::vector<int> world_counts{1, 8, 64};
  int bench_steps = 100;
  int bench_threads = 0;
  long bench_seed = 0;
  SolverFlags bench_flags;
  bench->add_option("scenes", bench_scenes, "scene file(s); multiple paths build heterogeneous batches")
      ->required();
  bench->add_option("--worlds", world_counts, "world counts to measure");
  bench->add_option("--steps", bench_steps, "steps per measurement");
  bench->add_option("--threads", bench_threads, "worker threads (0: hardware)");
  bench->add_option("--seed", bench_seed, "initial-twist jitter seed (0 disables jitter)");
  add_solver_flags(bench, bench_flags);

  // fk
  auto* fk = app.add_subcommand("fk", "solve forward kinematics for joint targets");
  std::string fk_scene;
  std::vector<std::string> fk_targets;
  double fk_tol = 1e-8;
  int fk_max_iters = 100;
  fk->add_option("scene", fk_scene, "scene file")->required();
  fk->add_option("--target", fk_targets, "joint target as name=value (repeatable)");
  fk->add_option("--tol", fk_tol, "residual tolerance");
  fk->add_option("--max-iters", fk_max_iters, "Gauss-Newton iteration cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return run_simulate(sim_scene, duration, output, emit_every, sim_seed, sim, sim_flags);
    }
    if (bench->parsed()) {
      return run_bench(bench_scenes, world_counts, bench_steps, bench_threads, bench_seed, bench,
                       bench_flags);
    }
    if (fk->parsed()) {
      return run_fk(fk_scene, fk_targets, fk_tol, fk_max_iters);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
