#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopdyn/scene.hpp"
#include "loopdyn/se3.hpp"

namespace loopdyn {

// Parent index for joints anchored to the world and body index for
// world-fixed geoms (planes).
inline constexpr int kWorld = -1;

enum class JointType { Fixed, Revolute, Prismatic, Spherical };

// Bilateral row count locked by each joint type: fixed 3+3, revolute 3+2,
// prismatic 2+3, spherical 3+0.
int joint_row_count(JointType type);

struct JointSpec {
  std::string name;
  JointType type = JointType::Fixed;
  int parent = kWorld;  // body index or kWorld
  int child = 0;
  Pose frame_in_parent;  // in the parent body frame, or world if parent == kWorld
  Pose frame_in_child;
  Vec3 axis = Vec3::UnitZ();  // joint-frame axis, revolute/prismatic only
  bool has_limits = false;
  double lower = 0.0;
  double upper = 0.0;
  bool has_actuation = false;
  double kp = 0.0;
  double kd = 0.0;
  double target = 0.0;
  double target_rate = 0.0;
  double armature = 0.0;
  double damping = 0.0;
};

struct GeomSpec {
  enum class Shape { Sphere, Plane, Box };
  int body = kWorld;
  Shape shape = Shape::Sphere;
  double radius = 0.0;
  Vec3 half_extents = Vec3::Zero();
  Vec3 plane_normal = Vec3::UnitZ();
  double plane_offset = 0.0;
  double mu = 0.0;
  double restitution = 0.0;
};

struct BodySpec {
  std::string name;
  InertiaBlock inertia;
  Pose initial_pose;
  Twist initial_twist;
};

// Per-joint constraint bookkeeping, fixed at build time.
struct JointLayout {
  int row_offset = 0;  // into the bilateral segment
  int row_count = 0;
  int dyn_offset = 0;  // into the joint-dynamics segment (PD/armature/damping rows)
  int dyn_count = 0;
  bool has_pd = false;
  bool has_armature = false;
  bool has_damping = false;
  // Orthonormal complement of the axis in the parent joint frame; columns span
  // the plane the revolute rotational rows / prismatic positional rows live in.
  Eigen::Matrix<double, 3, 2> complement = Eigen::Matrix<double, 3, 2>::Zero();
};

class ModelError : public std::runtime_error {
 public:
  enum class Code {
    InvalidReference,
    NonUnitAxis,
    BadInertia,
    BadLimits,
    UnsupportedOnJointType,
    BadGeometry,
    UnsupportedCollisionPair,
    WrongJointType,
    DuplicateName,
  };
  ModelError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Immutable once built; shareable across worlds and threads.
struct MechanismModel {
  std::string name;
  std::vector<BodySpec> bodies;
  std::vector<JointSpec> joints;
  std::vector<GeomSpec> geoms;
  Vec3 gravity = Vec3(0, 0, -9.81);

  std::vector<JointLayout> joint_layout;
  int n_bilateral_rows = 0;  // sum of per-joint structural rows
  int n_dynamics_rows = 0;   // PD + armature + damping rows
  int n_loops = 0;           // independent kinematic cycles, world counted as a body

  int n_bodies() const { return static_cast<int>(bodies.size()); }
  int velocity_dim() const { return 6 * n_bodies(); }
  int body_index(const std::string& name) const;   // kWorld for "world"
  int joint_index(const std::string& name) const;  // -1 if absent
};

// Validates and resolves a scene; throws ModelError with a message naming the
// offending entity.
MechanismModel build_model(const SceneDescription& scene);

// World pose of a joint's parent/child anchor frames at the given body poses.
struct JointFrames {
  Vec3 anchor_parent;  // world position of the frame on the parent
  Vec3 anchor_child;
  Mat3 frame_parent;  // world rotation of the joint frame on each side
  Mat3 frame_child;
};
JointFrames joint_world_frames(const MechanismModel& model, int joint, std::span<const Pose> poses);

// Scalar coordinate of a revolute (signed angle in (-pi, pi]) or prismatic
// (signed displacement) joint. Throws ModelError::WrongJointType otherwise.
double joint_coordinate(const MechanismModel& model, int joint, std::span<const Pose> poses);

}  // namespace loopdyn
