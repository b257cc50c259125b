#include "loopdyn/delassus.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace loopdyn {

namespace {

// M^-1 applied to a 1x6 row block (returning the row of J M^-1).
RowVector6 fold_inverse_mass(const RowVector6& block, const BodyInertiaWorld& inertia) {
  RowVector6 out;
  out.head<3>() = block.head<3>() * inertia.inv_mass;
  out.tail<3>() = block.tail<3>() * inertia.inv_inertia_world;
  return out;
}

}  // namespace

std::vector<BodyInertiaWorld> world_inertias(const MechanismModel& model,
                                             std::span<const Pose> poses) {
  std::vector<BodyInertiaWorld> out(model.n_bodies());
  for (int b = 0; b < model.n_bodies(); ++b) {
    const InertiaBlock& in = model.bodies[b].inertia;
    BodyInertiaWorld& w = out[b];
    w.mass = in.mass;
    w.inv_mass = 1.0 / in.mass;
    w.inertia_world = world_inertia(in, poses[b].orientation);
    Mat3 inv = w.inertia_world.llt().solve(Mat3::Identity());
    w.inv_inertia_world = 0.5 * (inv + inv.transpose());
  }
  return out;
}

Preconditioner jacobi_preconditioner(const ConstraintSet& cs,
                                     std::span<const BodyInertiaWorld> inertias) {
  constexpr double kFloor = 1e-12;
  VectorXd diag(cs.n_rows);
  for (int r = 0; r < cs.n_rows; ++r) {
    const JacobianRow& row = cs.rows[r];
    double d = cs.reg[r];
    if (row.body_a >= 0) d += fold_inverse_mass(row.block_a, inertias[row.body_a]).dot(row.block_a);
    if (row.body_b >= 0) d += fold_inverse_mass(row.block_b, inertias[row.body_b]).dot(row.block_b);
    diag[r] = d;
  }
  Preconditioner p;
  p.scale.resize(cs.n_rows);
  for (int r = 0; r < cs.n_rows; ++r) p.scale[r] = 1.0 / std::sqrt(std::max(diag[r], kFloor));
  for (const ConeGroup& g : cs.cones.groups) {
    if (g.kind == ConeGroup::Kind::SecondOrder) {
      p.scale[g.begin + 1] = p.scale[g.begin];
      p.scale[g.begin + 2] = p.scale[g.begin];
    }
  }
  return p;
}

bool DenseDelassus::factorize() {
  factor.compute(matrix);
  factorized = factor.info() == Eigen::Success;
  return factorized;
}

VectorXd DenseDelassus::solve(const VectorXd& rhs) const { return factor.solve(rhs); }

DenseDelassus assemble_dense(const ConstraintSet& cs, std::span<const BodyInertiaWorld> inertias,
                             double eta_rho, const Preconditioner* precond) {
  DenseDelassus dd;
  dd.matrix = MatrixXd::Zero(cs.n_rows, cs.n_rows);

  // Blockwise J M^-1 J^T: only rows sharing a body couple. Gather the row
  // blocks per body once, then scatter the small Gram matrices.
  std::vector<std::vector<std::pair<int, const RowVector6*>>> per_body(cs.n_bodies);
  for (int r = 0; r < cs.n_rows; ++r) {
    const JacobianRow& row = cs.rows[r];
    if (row.body_a >= 0) per_body[row.body_a].push_back({r, &row.block_a});
    if (row.body_b >= 0) per_body[row.body_b].push_back({r, &row.block_b});
  }
  for (int b = 0; b < cs.n_bodies; ++b) {
    const auto& touching = per_body[b];
    const int k = static_cast<int>(touching.size());
    if (k == 0) continue;
    MatrixXd g(k, 6), gm(k, 6);
    for (int i = 0; i < k; ++i) {
      g.row(i) = *touching[i].second;
      gm.row(i) = fold_inverse_mass(*touching[i].second, inertias[b]);
    }
    const MatrixXd gram = gm * g.transpose();
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        dd.matrix(touching[i].first, touching[j].first) += gram(i, j);
      }
    }
  }
  dd.matrix.diagonal() += cs.reg;
  if (precond) {
    dd.matrix = precond->scale.asDiagonal() * dd.matrix * precond->scale.asDiagonal();
  }
  dd.matrix.diagonal().array() += eta_rho;
  dd.matrix = 0.5 * (dd.matrix + dd.matrix.transpose().eval());
  dd.factorize();
  return dd;
}

void MatrixFreeDelassus::apply(const VectorXd& v, VectorXd& out) const {
  scratch.setZero(6 * n_bodies);
  const int n = static_cast<int>(rows.size());
  for (int r = 0; r < n; ++r) {
    const BakedRow& row = rows[r];
    if (row.body_a >= 0) scratch.segment<6>(6 * row.body_a) += row.ja.transpose() * v[r];
    if (row.body_b >= 0) scratch.segment<6>(6 * row.body_b) += row.jb.transpose() * v[r];
  }
  out.resize(n);
  for (int r = 0; r < n; ++r) {
    const BakedRow& row = rows[r];
    double s = diag_add[r] * v[r];
    if (row.body_a >= 0) s += row.jma * scratch.segment<6>(6 * row.body_a);
    if (row.body_b >= 0) s += row.jmb * scratch.segment<6>(6 * row.body_b);
    out[r] = s;
  }
}

VectorXd MatrixFreeDelassus::apply(const VectorXd& v) const {
  VectorXd out;
  apply(v, out);
  return out;
}

MatrixFreeDelassus bake_jacobian(const ConstraintSet& cs,
                                 std::span<const BodyInertiaWorld> inertias,
                                 const Preconditioner& precond, double eta_rho) {
  MatrixFreeDelassus op;
  op.n_bodies = cs.n_bodies;
  op.rows.resize(cs.n_rows);
  op.diag_add.resize(cs.n_rows);
  for (int r = 0; r < cs.n_rows; ++r) {
    const JacobianRow& row = cs.rows[r];
    MatrixFreeDelassus::BakedRow& baked = op.rows[r];
    const double p = precond.scale[r];
    baked.body_a = row.body_a;
    baked.body_b = row.body_b;
    if (row.body_a >= 0) {
      baked.ja = p * row.block_a;
      baked.jma = fold_inverse_mass(baked.ja, inertias[row.body_a]);
    }
    if (row.body_b >= 0) {
      baked.jb = p * row.block_b;
      baked.jmb = fold_inverse_mass(baked.jb, inertias[row.body_b]);
    }
    op.diag_add[r] = p * p * cs.reg[r] + eta_rho;
  }
  return op;
}

CrResult cr_solve(const MatrixFreeDelassus& op, const VectorXd& rhs, VectorXd& x, int max_iters,
                  std::vector<double>* residual_history) {
  CrResult result;
  if (x.size() != rhs.size()) x = VectorXd::Zero(rhs.size());
  VectorXd r = rhs - op.apply(x);
  VectorXd ar = op.apply(r);
  VectorXd p = r;
  VectorXd ap = ar;
  double rar = r.dot(ar);
  if (residual_history) residual_history->push_back(r.norm());
  const double breakdown_eps = 1e-30 * std::max(1.0, rhs.squaredNorm());
  for (int k = 0; k < max_iters; ++k) {
    const double apap = ap.squaredNorm();
    if (!(rar > breakdown_eps) || !(apap > breakdown_eps)) {
      result.breakdown = true;
      break;
    }
    const double alpha = rar / apap;
    x += alpha * p;
    r -= alpha * ap;
    if (residual_history) residual_history->push_back(r.norm());
    ar = op.apply(r);
    const double rar_next = r.dot(ar);
    const double beta = rar_next / rar;
    p = r + beta * p;
    ap = ar + beta * ap;
    rar = rar_next;
    ++result.iterations;
  }
  result.residual_norm = r.norm();
  return result;
}

void DelassusBackend::solve(const VectorXd& rhs, VectorXd& x) const {
  if (dense) {
    x = dense->solve(rhs);
    return;
  }
  const CrResult r = cr_solve(*matrix_free, rhs, x, cr_budget);
  cr_iterations_total += r.iterations;
  cr_breakdown = cr_breakdown || (r.breakdown && r.residual_norm > 1e-9 * std::max(1.0, rhs.norm()));
}

DelassusBackend build_backend(const ConstraintSet& cs, std::span<const BodyInertiaWorld> inertias,
                              const Preconditioner& precond, double eta_rho, BackendChoice choice,
                              int cr_budget) {
  DelassusBackend backend;
  backend.cr_budget = cr_budget;
  const bool use_dense =
      choice == BackendChoice::Dense ||
      (choice == BackendChoice::Auto && cs.n_rows <= kDenseRowCrossover);
  if (use_dense) {
    backend.dense = assemble_dense(cs, inertias, eta_rho, &precond);
    if (!backend.dense->factorized) {
      // D + (eta+rho)I is SPD by construction; a failed factorization is an
      // internal fault, not a runtime condition.
      throw std::runtime_error("Delassus factorization failed on an SPD system (" +
                               std::to_string(cs.n_rows) +
                               " rows, eta+rho = " + std::to_string(eta_rho) + ")");
    }
  } else {
    backend.matrix_free = bake_jacobian(cs, inertias, precond, eta_rho);
  }
  return backend;
}

}  // namespace loopdyn
