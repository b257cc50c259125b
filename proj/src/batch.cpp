#include "loopdyn/batch.hpp"

#include <atomic>
#include <thread>

namespace loopdyn {

int WorldBatch::add_world(std::shared_ptr<const MechanismModel> model) {
  const WorldState state = initial_state(*model);
  return add_world(std::move(model), state);
}

int WorldBatch::add_world(std::shared_ptr<const MechanismModel> model, const WorldState& state) {
  Entry e;
  e.model = std::move(model);
  e.pose_offset = static_cast<int>(poses_.size());
  e.twist_offset = static_cast<int>(twists_.size());
  const int nb = e.model->n_bodies();
  poses_.resize(poses_.size() + 7 * nb);
  twists_.resize(twists_.size() + 6 * nb);
  entries_.push_back(std::move(e));
  const int w = static_cast<int>(entries_.size()) - 1;
  insert_state(w, state);
  return w;
}

WorldState WorldBatch::extract_state(int w) const {
  const Entry& e = entries_[w];
  const int nb = e.model->n_bodies();
  WorldState s;
  s.poses.resize(nb);
  s.twists.resize(nb);
  for (int b = 0; b < nb; ++b) {
    const double* p = &poses_[e.pose_offset + 7 * b];
    s.poses[b].position = Vec3(p[0], p[1], p[2]);
    s.poses[b].orientation = Quat(p[3], p[4], p[5], p[6]);
    const double* t = &twists_[e.twist_offset + 6 * b];
    s.twists[b].linear = Vec3(t[0], t[1], t[2]);
    s.twists[b].angular = Vec3(t[3], t[4], t[5]);
  }
  s.time = e.time;
  s.joint_cache = e.joint_cache;
  s.limit_cache = e.limit_cache;
  s.contact_cache = e.contact_cache;
  return s;
}

void WorldBatch::insert_state(int w, const WorldState& state) {
  Entry& e = entries_[w];
  const int nb = e.model->n_bodies();
  for (int b = 0; b < nb; ++b) {
    double* p = &poses_[e.pose_offset + 7 * b];
    p[0] = state.poses[b].position.x();
    p[1] = state.poses[b].position.y();
    p[2] = state.poses[b].position.z();
    p[3] = state.poses[b].orientation.w();
    p[4] = state.poses[b].orientation.x();
    p[5] = state.poses[b].orientation.y();
    p[6] = state.poses[b].orientation.z();
    double* t = &twists_[e.twist_offset + 6 * b];
    t[0] = state.twists[b].linear.x();
    t[1] = state.twists[b].linear.y();
    t[2] = state.twists[b].linear.z();
    t[3] = state.twists[b].angular.x();
    t[4] = state.twists[b].angular.y();
    t[5] = state.twists[b].angular.z();
  }
  e.time = state.time;
  e.joint_cache = state.joint_cache;
  e.limit_cache = state.limit_cache;
  e.contact_cache = state.contact_cache;
}

void batch_step(WorldBatch& batch, const StepConfig& config, int n_threads) {
  std::vector<int> work;
  work.reserve(batch.entries_.size());
  for (int w = 0; w < batch.size(); ++w) {
    if (batch.entries_[w].active) work.push_back(w);
  }
  if (work.empty()) return;

  if (n_threads <= 0) {
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads <= 0) n_threads = 1;
  }
  n_threads = std::min<int>(n_threads, static_cast<int>(work.size()));

  std::atomic<size_t> next{0};
  auto run = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= work.size()) break;
      const int w = work[i];
      WorldBatch::Entry& e = batch.entries_[w];
      WorldState state = batch.extract_state(w);
      e.diag = step(*e.model, state, config);
      e.converged = e.diag.solver.converged;
      batch.insert_state(w, state);
    }
  };

  if (n_threads == 1) {
    run();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(run);
  for (std::thread& t : pool) t.join();
}

}  // namespace loopdyn
