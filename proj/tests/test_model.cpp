#include <doctest.h>

#include <random>

#include "loopdyn/model.hpp"
#include "loopdyn/scene.hpp"

using namespace loopdyn;

namespace {

SceneDescription minimal_scene() {
  SceneDescription s;
  s.name = "minimal";
  SceneBody b;
  b.name = "a";
  b.mass = 1.0;
  b.inertia = Mat3::Identity() * 0.1;
  s.bodies.push_back(b);
  return s;
}

SceneJoint revolute(const std::string& name, const std::string& parent, const std::string& child) {
  SceneJoint j;
  j.name = name;
  j.type = "revolute";
  j.parent = parent;
  j.child = child;
  j.axis = Vec3::UnitZ();
  return j;
}

}  // namespace

TEST_CASE("single free body has no rows and six velocity DOF") {
  const MechanismModel m = build_model(minimal_scene());
  CHECK(m.n_bilateral_rows == 0);
  CHECK(m.velocity_dim() == 6);
  CHECK(m.n_loops == 0);
}

TEST_CASE("four-bar bookkeeping: 20 rows, 18 DOF, one loop") {
  const SceneDescription scene =
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json");
  const MechanismModel m = build_model(scene);
  CHECK(m.n_bilateral_rows == 20);
  CHECK(m.velocity_dim() == 18);
  CHECK(m.n_loops == 1);
  CHECK(m.n_dynamics_rows == 1);  // PD on the crank
  // Row offsets follow declaration order.
  CHECK(m.joint_layout[0].row_offset == 0);
  CHECK(m.joint_layout[1].row_offset == 5);
  CHECK(m.joint_layout[2].row_offset == 10);
  CHECK(m.joint_layout[3].row_offset == 15);
}

TEST_CASE("a 31-body, 36-joint graph reports six independent loops") {
  SceneDescription s;
  s.name = "legs_like";
  for (int i = 0; i < 31; ++i) {
    SceneBody b;
    b.name = "b" + std::to_string(i);
    b.inertia = Mat3::Identity() * 0.01;
    s.bodies.push_back(b);
  }
  // Spanning tree (30 joints) plus six chords; nothing touches the world.
  for (int i = 1; i < 31; ++i) {
    s.joints.push_back(revolute("t" + std::to_string(i), "b" + std::to_string(i - 1),
                                "b" + std::to_string(i)));
  }
  for (int k = 0; k < 6; ++k) {
    s.joints.push_back(revolute("loop" + std::to_string(k), "b" + std::to_string(3 * k),
                                "b" + std::to_string(3 * k + 2)));
  }
  const MechanismModel m = build_model(s);
  CHECK(static_cast<int>(m.joints.size()) == 36);
  CHECK(m.n_loops == 6);
}

TEST_CASE("validation failures carry distinct codes and messages") {
  {
    SceneDescription s = minimal_scene();
    s.joints.push_back(revolute("j", "a", "nosuch"));
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("unknown body"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    SceneJoint j = revolute("j", "world", "a");
    j.axis = Vec3(0, 0, 2);
    s.joints.push_back(j);
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("unit length"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    s.bodies[0].inertia = -Mat3::Identity();
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("positive definite"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    s.bodies[0].inertia = Vec3(1.0, 0.1, 0.1).asDiagonal();  // 1 > 0.1 + 0.1
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("triangle"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    SceneJoint j = revolute("j", "world", "a");
    j.type = "spherical";
    j.limits = {{-1.0, 1.0}};
    s.joints.push_back(j);
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("limits"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    SceneJoint j = revolute("j", "world", "a");
    j.limits = {{1.0, -1.0}};
    s.joints.push_back(j);
    CHECK_THROWS_AS(build_model(s), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    s.joints.push_back(revolute("j", "a", "a"));
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("differ"), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    s.bodies.push_back(s.bodies[0]);
    CHECK_THROWS_AS(build_model(s), ModelError);
  }
  {
    SceneDescription s = minimal_scene();
    SceneGeom g;
    g.body = "a";
    g.shape = "plane";
    s.geoms.push_back(g);
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("world"), ModelError);
  }
  {
    // box-sphere narrow phase is unsupported and must fail at build.
    SceneDescription s = minimal_scene();
    SceneBody b2 = s.bodies[0];
    b2.name = "b";
    s.bodies.push_back(b2);
    SceneGeom box;
    box.body = "a";
    box.shape = "box";
    box.half_extents = Vec3(0.1, 0.1, 0.1);
    SceneGeom sphere;
    sphere.body = "b";
    sphere.shape = "sphere";
    sphere.radius = 0.1;
    s.geoms.push_back(box);
    s.geoms.push_back(sphere);
    CHECK_THROWS_WITH_AS(build_model(s), doctest::Contains("unsupported collision pair"),
                         ModelError);
  }
}

TEST_CASE("joint coordinate of aligned frames is zero") {
  SceneDescription s = minimal_scene();
  s.joints.push_back(revolute("j", "world", "a"));
  const MechanismModel m = build_model(s);
  const std::vector<Pose> poses{Pose{}};
  CHECK(joint_coordinate(m, 0, poses) == doctest::Approx(0.0));
}

TEST_CASE("joint coordinate reads +pi/6 for a +30 degree child rotation") {
  SceneDescription s = minimal_scene();
  s.joints.push_back(revolute("j", "world", "a"));
  const MechanismModel m = build_model(s);
  std::vector<Pose> poses{Pose{}};
  poses[0].orientation = Quat(Eigen::AngleAxisd(M_PI / 6, Vec3::UnitZ()));
  CHECK(joint_coordinate(m, 0, poses) == doctest::Approx(M_PI / 6).epsilon(1e-12));
}

TEST_CASE("joint coordinate matches the rotation-log oracle on random configurations") {
  std::mt19937 rng(7);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    SceneDescription s = minimal_scene();
    SceneBody parent = s.bodies[0];
    parent.name = "p";
    s.bodies.push_back(parent);
    SceneJoint j = revolute("j", "p", "a");
    j.axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    j.frame_in_parent.position = Vec3(n(rng), n(rng), n(rng));
    j.frame_in_parent.orientation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    j.frame_in_child.position = Vec3(n(rng), n(rng), n(rng));
    j.frame_in_child.orientation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    s.joints.push_back(j);
    const MechanismModel m = build_model(s);

    const double theta = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    std::vector<Pose> poses(2);
    poses[1].position = Vec3(n(rng), n(rng), n(rng));
    poses[1].orientation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    // Place the child so the relative joint rotation is exactly theta about
    // the axis and the anchors coincide.
    const JointFrames fr = joint_world_frames(m, 0, poses);
    const Mat3 w_parent = fr.frame_parent;
    const Mat3 w_child = w_parent * so3_exp(theta * m.joints[0].axis);
    poses[0].orientation = Quat(w_child * m.joints[0].frame_in_child.rotation().transpose());
    poses[0].position =
        fr.anchor_parent - poses[0].orientation * m.joints[0].frame_in_child.position;

    const double coord = joint_coordinate(m, 0, poses);
    const JointFrames fr2 = joint_world_frames(m, 0, poses);
    const double oracle = so3_log(Mat3(fr2.frame_parent.transpose() * fr2.frame_child))
                              .dot(m.joints[0].axis);
    CHECK(coord == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("joint coordinate rejects joints without a scalar coordinate") {
  SceneDescription s = minimal_scene();
  SceneJoint j;
  j.name = "ball";
  j.type = "spherical";
  j.parent = "world";
  j.child = "a";
  s.joints.push_back(j);
  const MechanismModel m = build_model(s);
  const std::vector<Pose> poses{Pose{}};
  CHECK_THROWS_AS(joint_coordinate(m, 0, poses), ModelError);
}

TEST_CASE("build is deterministic") {
  const SceneDescription scene =
      load_scene_file(std::string(LOOPDYN_SCENE_DIR) + "/fourbar.json");
  const MechanismModel a = build_model(scene);
  const MechanismModel b = build_model(scene);
  REQUIRE(a.joints.size() == b.joints.size());
  for (size_t j = 0; j < a.joints.size(); ++j) {
    CHECK(a.joint_layout[j].row_offset == b.joint_layout[j].row_offset);
    CHECK(a.joint_layout[j].dyn_offset == b.joint_layout[j].dyn_offset);
    CHECK(a.joints[j].target == b.joints[j].target);
  }
}
