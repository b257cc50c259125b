#pragma once

#include <memory>
#include <vector>

#include "loopdyn/stepper.hpp"

namespace loopdyn {

// Heterogeneous set of worlds stepped in parallel. Poses and twists live in
// contiguous arrays sized by the sum of per-world dimensions, addressed
// through prefix-sum offsets; models may be shared between worlds. Stepping a
// world through the batch is bit-identical to stepping it alone.
class WorldBatch {
 public:
  int add_world(std::shared_ptr<const MechanismModel> model);
  int add_world(std::shared_ptr<const MechanismModel> model, const WorldState& state);

  int size() const { return static_cast<int>(entries_.size()); }
  const MechanismModel& model(int w) const { return *entries_[w].model; }

  WorldState extract_state(int w) const;
  void insert_state(int w, const WorldState& state);

  void set_active(int w, bool active) { entries_[w].active = active; }
  bool active(int w) const { return entries_[w].active; }
  // Solver convergence of the last step, for straggler reporting.
  bool converged(int w) const { return entries_[w].converged; }
  const StepDiagnostics& diagnostics(int w) const { return entries_[w].diag; }

  int pose_offset(int w) const { return entries_[w].pose_offset; }
  int twist_offset(int w) const { return entries_[w].twist_offset; }
  const std::vector<double>& pose_storage() const { return poses_; }
  const std::vector<double>& twist_storage() const { return twists_; }

  friend void batch_step(WorldBatch& batch, const StepConfig& config, int n_threads);

 private:
  struct Entry {
    std::shared_ptr<const MechanismModel> model;
    int pose_offset = 0;   // into poses_, 7 doubles per body [x y z qw qx qy qz]
    int twist_offset = 0;  // into twists_, 6 doubles per body
    bool active = true;
    bool converged = true;
    double time = 0.0;
    StepDiagnostics diag;
    JointReactionCache joint_cache;
    LimitReactionCache limit_cache;
    ReactionCache contact_cache;
  };
  std::vector<Entry> entries_;
  std::vector<double> poses_;
  std::vector<double> twists_;
};

// Steps every active world; per-world results are independent of thread count
// and batch composition. n_threads 0 means hardware concurrency.
void batch_step(WorldBatch& batch, const StepConfig& config, int n_threads = 0);

}  // namespace loopdyn
