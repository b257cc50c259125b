#include <doctest.h>

#include <random>

#include "loopdyn/delassus.hpp"
#include "loopdyn/scene.hpp"
#include "loopdyn/stepper.hpp"

using namespace loopdyn;

namespace {

std::mt19937 rng(77);

std::vector<Pose> initial_poses(const MechanismModel& m) {
  std::vector<Pose> poses;
  for (const BodySpec& b : m.bodies) poses.push_back(b.initial_pose);
  return poses;
}

ConstraintSet fourbar_constraints(const MechanismModel& m, const std::vector<Pose>& poses) {
  const std::vector<Twist> twists(m.bodies.size());
  return assemble_constraints(m, poses, twists, {}, AssembleConfig{});
}

// Naive dense oracle: J M^-1 J^T + diag(R) via full matrices.
MatrixXd naive_delassus(const ConstraintSet& cs, const MechanismModel& m,
                        const std::vector<Pose>& poses) {
  const MatrixXd j = cs.dense_jacobian();
  MatrixXd minv = MatrixXd::Zero(6 * m.n_bodies(), 6 * m.n_bodies());
  for (int b = 0; b < m.n_bodies(); ++b) {
    const Matrix6 mb = world_mass_block(m.bodies[b].inertia, poses[b].orientation);
    minv.block<6, 6>(6 * b, 6 * b) = mb.inverse();
  }
  MatrixXd d = j * minv * j.transpose();
  d.diagonal() += cs.reg;
  return d;
}

MechanismModel sphere_plane_model() {
  SceneDescription s;
  SceneBody ball;
  ball.name = "ball";
  ball.inertia = Mat3::Identity() * 0.004;
  ball.pose.position = Vec3(0, 0, 0.1);
  s.bodies.push_back(ball);
  SceneGeom gs;
  gs.body = "ball";
  gs.shape = "sphere";
  gs.radius = 0.1;
  gs.mu = 0.5;
  SceneGeom gp;
  gp.body = "world";
  gp.shape = "plane";
  gp.mu = 0.5;
  s.geoms.push_back(gs);
  s.geoms.push_back(gp);
  return build_model(s);
}

}  // namespace

TEST_CASE("single row on one body: D entry is the inverse mass") {
  SceneDescription s;
  SceneBody b;
  b.name = "a";
  b.mass = 4.0;
  b.inertia = Mat3::Identity() * 0.1;
  s.bodies.push_back(b);
  const MechanismModel m = build_model(s);
  ConstraintSet cs;
  cs.n_rows = 1;
  cs.n_bodies = 1;
  JacobianRow row;
  row.body_a = 0;
  row.block_a << 1, 0, 0, 0, 0, 0;  // picks v_x
  cs.rows.push_back(row);
  cs.bias = VectorXd::Zero(1);
  cs.reg = VectorXd::Zero(1);
  const auto inertias = world_inertias(m, initial_poses(m));
  const DenseDelassus dd = assemble_dense(cs, inertias, 0.0);
  CHECK(dd.matrix(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("rows on disjoint bodies do not couple") {
  SceneDescription s;
  for (const char* name : {"a", "b"}) {
    SceneBody body;
    body.name = name;
    body.inertia = Mat3::Identity() * 0.1;
    s.bodies.push_back(body);
  }
  const MechanismModel m = build_model(s);
  ConstraintSet cs;
  cs.n_rows = 2;
  cs.n_bodies = 2;
  JacobianRow r0, r1;
  r0.body_a = 0;
  r0.block_a << 1, 0, 0, 0, 0, 0;
  r1.body_a = 1;
  r1.block_a << 0, 1, 0, 0, 0, 0;
  cs.rows = {r0, r1};
  cs.bias = VectorXd::Zero(2);
  cs.reg = VectorXd::Zero(2);
  const auto inertias = world_inertias(m, initial_poses(m));
  const DenseDelassus dd = assemble_dense(cs, inertias, 0.0);
  CHECK(dd.matrix(0, 1) == 0.0);
  CHECK(dd.matrix(1, 0) == 0.0);
}

TEST_CASE("blockwise assembly matches the naive triple product on the four-bar") {
  const MechanismModel m = build_model(
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json"));
  const auto poses = initial_poses(m);
  const ConstraintSet cs = fourbar_constraints(m, poses);
  const auto inertias = world_inertias(m, poses);
  const double eta_rho = 1e-3;
  const DenseDelassus dd = assemble_dense(cs, inertias, eta_rho);
  MatrixXd expected = naive_delassus(cs, m, poses);
  expected.diagonal().array() += eta_rho;
  CHECK((dd.matrix - expected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(dd.factorized);
}

TEST_CASE("dense_solve: identity, zero rhs, and a random SPD residual check") {
  {
    DenseDelassus dd;
    dd.matrix = MatrixXd::Identity(5, 5);
    REQUIRE(dd.factorize());
    const VectorXd rhs = VectorXd::Random(5);
    CHECK((dd.solve(rhs) - rhs).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK(dd.solve(VectorXd::Zero(5)).lpNorm<Eigen::Infinity>() == 0.0);
  }
  {
    const MatrixXd b = MatrixXd::Random(30, 30);
    DenseDelassus dd;
    dd.matrix = b.transpose() * b + MatrixXd::Identity(30, 30);
    REQUIRE(dd.factorize());
    const VectorXd rhs = VectorXd::Random(30);
    const VectorXd x = dd.solve(rhs);
    CHECK((dd.matrix * x - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("baked operator reproduces the preconditioned dense matrix by column probes") {
  const MechanismModel m = build_model(
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json"));
  const auto poses = initial_poses(m);
  const ConstraintSet cs = fourbar_constraints(m, poses);
  const auto inertias = world_inertias(m, poses);
  const double eta_rho = 1.0 + 1e-6;

  SUBCASE("identity preconditioner: apply is J M^-1 J^T v + (eta+rho) v") {
    const Preconditioner p = Preconditioner::identity(cs.n_rows);
    const MatrixFreeDelassus op = bake_jacobian(cs, inertias, p, eta_rho);
    MatrixXd expected = naive_delassus(cs, m, poses);
    expected.diagonal().array() += eta_rho;
    for (int trial = 0; trial < 10; ++trial) {
      const VectorXd v = VectorXd::Random(cs.n_rows);
      CHECK((op.apply(v) - expected * v).lpNorm<Eigen::Infinity>() < 1e-9);
    }
  }
  SUBCASE("Jacobi preconditioner: column probes match the dense assembly") {
    const Preconditioner p = jacobi_preconditioner(cs, inertias);
    const MatrixFreeDelassus op = bake_jacobian(cs, inertias, p, eta_rho);
    const DenseDelassus dd = assemble_dense(cs, inertias, eta_rho, &p);
    for (int k = 0; k < cs.n_rows; ++k) {
      const VectorXd col = op.apply(VectorXd::Unit(cs.n_rows, k));
      CHECK((col - dd.matrix.col(k)).lpNorm<Eigen::Infinity>() < 1e-9);
    }
  }
  SUBCASE("apply is linear") {
    const Preconditioner p = jacobi_preconditioner(cs, inertias);
    const MatrixFreeDelassus op = bake_jacobian(cs, inertias, p, eta_rho);
    const VectorXd u = VectorXd::Random(cs.n_rows);
    const VectorXd v = VectorXd::Random(cs.n_rows);
    const double alpha = 1.3, beta = -0.7;
    CHECK((op.apply(alpha * u + beta * v) - alpha * op.apply(u) - beta * op.apply(v))
              .lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("zero-row operator is pure diagonal") {
  MatrixFreeDelassus op;
  op.n_bodies = 1;
  op.rows.resize(3);  // rows with no body blocks
  op.diag_add = VectorXd::Constant(3, 2.5);
  const VectorXd v = VectorXd::Random(3);
  CHECK((op.apply(v) - 2.5 * v).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("cr_solve returns an exact warm start unchanged") {
  MatrixFreeDelassus op;
  op.n_bodies = 1;
  op.rows.resize(4);
  op.diag_add = VectorXd::Constant(4, 2.0);
  const VectorXd rhs = VectorXd::Random(4);
  VectorXd x = rhs / 2.0;
  const CrResult r = cr_solve(op, rhs, x, 10);
  CHECK((x - rhs / 2.0).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.breakdown);  // zero residual trips the breakdown guard immediately
  CHECK(r.iterations == 0);
}

TEST_CASE("cr_solve converges in one iteration on a uniform diagonal") {
  MatrixFreeDelassus op;
  op.n_bodies = 1;
  op.rows.resize(6);
  op.diag_add = VectorXd::Constant(6, 3.0);
  const VectorXd rhs = VectorXd::Random(6);
  VectorXd x = VectorXd::Zero(6);
  std::vector<double> history;
  cr_solve(op, rhs, x, 1, &history);
  CHECK((x - rhs / 3.0).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("cr_solve finishes in at most n_distinct iterations on a diagonal") {
  MatrixFreeDelassus op;
  op.n_bodies = 1;
  op.rows.resize(8);
  op.diag_add.resize(8);
  // three distinct eigenvalues
  op.diag_add << 1, 1, 2, 2, 2, 5, 5, 1;
  const VectorXd rhs = VectorXd::Random(8);
  VectorXd x = VectorXd::Zero(8);
  cr_solve(op, rhs, x, 3);
  CHECK((op.apply(x) - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("cr residual norm is monotonically non-increasing") {
  const MechanismModel m = build_model(
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/serial_chain_10.json"));
  const auto poses = initial_poses(m);
  const ConstraintSet cs = fourbar_constraints(m, poses);
  const auto inertias = world_inertias(m, poses);
  const Preconditioner p = jacobi_preconditioner(cs, inertias);
  const MatrixFreeDelassus op = bake_jacobian(cs, inertias, p, 1.0);
  const VectorXd rhs = VectorXd::Random(cs.n_rows);
  VectorXd x = VectorXd::Zero(cs.n_rows);
  std::vector<double> history;
  cr_solve(op, rhs, x, 40, &history);
  for (size_t k = 1; k < history.size(); ++k) {
    CHECK(history[k] <= history[k - 1] + 1e-12);
  }
}

TEST_CASE("jacobi preconditioner basics") {
  {
    // unit-diagonal system: P = I
    SceneDescription s;
    SceneBody b;
    b.name = "a";
    b.mass = 1.0;
    b.inertia = Mat3::Identity();
    s.bodies.push_back(b);
    const MechanismModel m = build_model(s);
    ConstraintSet cs;
    cs.n_rows = 1;
    cs.n_bodies = 1;
    JacobianRow row;
    row.body_a = 0;
    row.block_a << 1, 0, 0, 0, 0, 0;
    cs.rows.push_back(row);
    cs.reg = VectorXd::Zero(1);
    cs.bias = VectorXd::Zero(1);
    const auto inertias = world_inertias(m, initial_poses(m));
    const Preconditioner p = jacobi_preconditioner(cs, inertias);
    CHECK(p.scale[0] == doctest::Approx(1.0));
  }
  {
    // D_ii = 4 -> scale 0.5 (mass 0.25 body)
    SceneDescription s;
    SceneBody b;
    b.name = "a";
    b.mass = 0.25;
    b.inertia = Mat3::Identity() * 0.01;
    s.bodies.push_back(b);
    const MechanismModel m = build_model(s);
    ConstraintSet cs;
    cs.n_rows = 1;
    cs.n_bodies = 1;
    JacobianRow row;
    row.body_a = 0;
    row.block_a << 1, 0, 0, 0, 0, 0;
    cs.rows.push_back(row);
    cs.reg = VectorXd::Zero(1);
    cs.bias = VectorXd::Zero(1);
    const auto inertias = world_inertias(m, initial_poses(m));
    const Preconditioner p = jacobi_preconditioner(cs, inertias);
    CHECK(p.scale[0] == doctest::Approx(0.5));
  }
}

TEST_CASE("preconditioned dense matrix has a unit diagonal on non-contact rows") {
  const MechanismModel m = build_model(
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json"));
  const auto poses = initial_poses(m);
  const ConstraintSet cs = fourbar_constraints(m, poses);
  const auto inertias = world_inertias(m, poses);
  const Preconditioner p = jacobi_preconditioner(cs, inertias);
  const DenseDelassus dd = assemble_dense(cs, inertias, 0.0, &p);
  for (int r = 0; r < cs.n_rows; ++r) {
    CHECK(dd.matrix(r, r) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("contact groups share the normal-row scale") {
  const MechanismModel m = sphere_plane_model();
  const auto poses = initial_poses(m);
  const auto contacts = collide(m, poses, 0.01);
  const std::vector<Twist> twists(1);
  const ConstraintSet cs = assemble_constraints(m, poses, twists, contacts, AssembleConfig{});
  REQUIRE(cs.n_contact_rows == 3);
  const auto inertias = world_inertias(m, poses);
  const Preconditioner p = jacobi_preconditioner(cs, inertias);
  const int r = cs.first_contact_row();
  CHECK(p.scale[r + 1] == p.scale[r]);
  CHECK(p.scale[r + 2] == p.scale[r]);
}

TEST_CASE("dense and matrix-free backends agree with a generous budget") {
  const MechanismModel m = build_model(
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json"));
  const auto poses = initial_poses(m);
  const ConstraintSet cs = fourbar_constraints(m, poses);
  const auto inertias = world_inertias(m, poses);
  const Preconditioner ident = Preconditioner::identity(cs.n_rows);
  const DenseDelassus dd = assemble_dense(cs, inertias, 1.0);
  const MatrixFreeDelassus op = bake_jacobian(cs, inertias, ident, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd rhs = VectorXd::Random(cs.n_rows);
    const VectorXd xd = dd.solve(rhs);
    VectorXd xi = VectorXd::Zero(cs.n_rows);
    cr_solve(op, rhs, xi, 200);
    CHECK((xd - xi).lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, xd.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("D stays SPD whenever eta+rho is positive (randomized)") {
  std::normal_distribution<double> n;
  int trials = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n_bodies = 1 + static_cast<int>(rng() % 3);
    SceneDescription s;
    for (int b = 0; b < n_bodies; ++b) {
      SceneBody body;
      body.name = "b" + std::to_string(b);
      body.mass = 0.1 + std::abs(n(rng));
      const double i0 = 0.01 + std::abs(n(rng)) * 0.1;
      body.inertia = Mat3::Identity() * i0;
      s.bodies.push_back(body);
    }
    const MechanismModel m = build_model(s);
    std::vector<Pose> poses(n_bodies);
    for (Pose& p : poses) {
      p.position = Vec3(n(rng), n(rng), n(rng));
      Quat q(n(rng), n(rng), n(rng), n(rng));
      p.orientation = q.normalized();
    }
    const int n_rows = 1 + static_cast<int>(rng() % 12);
    ConstraintSet cs;
    cs.n_rows = n_rows;
    cs.n_bodies = n_bodies;
    cs.reg = VectorXd::Zero(n_rows);
    cs.bias = VectorXd::Zero(n_rows);
    for (int r = 0; r < n_rows; ++r) {
      JacobianRow row;
      row.body_a = static_cast<int>(rng() % n_bodies);
      for (int k = 0; k < 6; ++k) row.block_a[k] = n(rng);
      if (n_bodies > 1 && (rng() % 2) == 0) {
        row.body_b = (row.body_a + 1) % n_bodies;
        for (int k = 0; k < 6; ++k) row.block_b[k] = n(rng);
      }
      if ((rng() % 3) == 0) cs.reg[r] = std::abs(n(rng));
      cs.rows.push_back(row);
    }
    const auto inertias = world_inertias(m, poses);
    DenseDelassus dd = assemble_dense(cs, inertias, 1e-6);
    REQUIRE(dd.factorized);
    ++trials;
  }
  CHECK(trials == 1000);
}
