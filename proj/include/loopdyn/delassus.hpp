#pragma once

#include <optional>
#include <span>
#include <vector>

#include "loopdyn/constraints.hpp"
#include "loopdyn/model.hpp"

namespace loopdyn {

// Per-body inverse mass data for one configuration.
struct BodyInertiaWorld {
  double mass = 1.0;
  double inv_mass = 1.0;
  Mat3 inertia_world = Mat3::Identity();
  Mat3 inv_inertia_world = Mat3::Identity();
};

std::vector<BodyInertiaWorld> world_inertias(const MechanismModel& model,
                                             std::span<const Pose> poses);

// Diagonal scaling P = diag(D)^{-1/2}. All three rows of a contact share the
// normal row's scale: a nonuniform diagonal inside one contact would distort
// the friction cone.
struct Preconditioner {
  VectorXd scale;
  static Preconditioner identity(int n) { return {VectorXd::Ones(n)}; }
};

Preconditioner jacobi_preconditioner(const ConstraintSet& cs,
                                     std::span<const BodyInertiaWorld> inertias);

// Explicit D_{eta,rho} = (P) (J M^-1 J^T + R) (P) + (eta+rho) I with a cached
// Cholesky factor, reused across every PADMM iteration of the step.
struct DenseDelassus {
  MatrixXd matrix;
  Eigen::LLT<MatrixXd> factor;
  bool factorized = false;

  bool factorize();
  VectorXd solve(const VectorXd& rhs) const;
};

DenseDelassus assemble_dense(const ConstraintSet& cs, std::span<const BodyInertiaWorld> inertias,
                             double eta_rho, const Preconditioner* precond = nullptr);

// Matrix-free operator realizing the same map with two block-sparse passes and
// a diagonal axpy: the preconditioner and M^-1 are pre-baked into copies of
// the constraint Jacobian.
struct MatrixFreeDelassus {
  struct BakedRow {
    int body_a = -1;
    int body_b = -1;
    RowVector6 ja = RowVector6::Zero();   // P J
    RowVector6 jb = RowVector6::Zero();
    RowVector6 jma = RowVector6::Zero();  // P J M^-1
    RowVector6 jmb = RowVector6::Zero();
  };
  std::vector<BakedRow> rows;
  VectorXd diag_add;  // P^2 R + (eta+rho)
  int n_bodies = 0;
  mutable VectorXd scratch;

  void apply(const VectorXd& v, VectorXd& out) const;
  VectorXd apply(const VectorXd& v) const;
};

MatrixFreeDelassus bake_jacobian(const ConstraintSet& cs,
                                 std::span<const BodyInertiaWorld> inertias,
                                 const Preconditioner& precond, double eta_rho);

struct CrResult {
  int iterations = 0;
  bool breakdown = false;
  double residual_norm = 0.0;
};

// Conjugate Residual with a fixed iteration budget (no early exit except on
// breakdown, where the current iterate is returned flagged). x holds the warm
// start on entry and the final iterate on exit.
CrResult cr_solve(const MatrixFreeDelassus& op, const VectorXd& rhs, VectorXd& x, int max_iters,
                  std::vector<double>* residual_history = nullptr);

enum class BackendChoice { Dense, MatrixFree, Auto };

// Crossover mirrors the throughput analysis: dense factorization up to ~300
// constraint rows, matrix-free beyond.
inline constexpr int kDenseRowCrossover = 300;

struct DelassusBackend {
  std::optional<DenseDelassus> dense;
  std::optional<MatrixFreeDelassus> matrix_free;
  int cr_budget = 9;
  mutable long cr_iterations_total = 0;
  mutable bool cr_breakdown = false;

  bool is_dense() const { return dense.has_value(); }
  // Solves D_{eta,rho} x = rhs; x is the warm start for the iterative path.
  void solve(const VectorXd& rhs, VectorXd& x) const;
};

DelassusBackend build_backend(const ConstraintSet& cs, std::span<const BodyInertiaWorld> inertias,
                              const Preconditioner& precond, double eta_rho, BackendChoice choice,
                              int cr_budget);

}  // namespace loopdyn
