#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopdyn/se3.hpp"

namespace loopdyn {

// Textual scene description: bodies, joints, geoms and config overrides,
// referenced by name. See README for the schema. Quaternions are [w,x,y,z].

struct SceneBody {
  std::string name;
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity();
  Pose pose;
  Twist twist;
};

struct SceneJoint {
  std::string name;
  std::string type;  // fixed | revolute | prismatic | spherical
  std::string parent;  // body name or "world"
  std::string child;
  Pose frame_in_parent;
  Pose frame_in_child;
  Vec3 axis = Vec3::UnitZ();
  std::optional<std::pair<double, double>> limits;
  double kp = 0.0;
  double kd = 0.0;
  std::optional<double> target;  // PD setpoint; defaults to the build-time coordinate
  double target_rate = 0.0;
  double armature = 0.0;
  double damping = 0.0;
};

struct SceneGeom {
  std::string body;  // "world" for planes
  std::string shape; // sphere | plane | box
  double radius = 0.0;
  Vec3 half_extents = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  double mu = 0.0;
  double restitution = 0.0;
};

// Optional solver/stepping overrides carried by the scene file; the CLI merges
// them under its own flags.
struct SceneConfig {
  std::optional<double> dt;
  std::optional<std::string> integrator;
  std::optional<std::string> backend;
  std::optional<double> beta;
  std::optional<double> rho;
  std::optional<double> eta;
  std::optional<double> eps;
  std::optional<int> max_iters;
  std::optional<int> cr_iters;
};

struct SceneDescription {
  std::string name;
  Vec3 gravity = Vec3(0, 0, -9.81);
  std::vector<SceneBody> bodies;
  std::vector<SceneJoint> joints;
  std::vector<SceneGeom> geoms;
  SceneConfig config;
};

class SceneError : public std::runtime_error {
 public:
  explicit SceneError(const std::string& what) : std::runtime_error(what) {}
};

// Throws SceneError with field context on malformed input.
SceneDescription parse_scene(const std::string& json_text, const std::string& origin = "<string>");
SceneDescription load_scene_file(const std::string& path);
std::string serialize_scene(const SceneDescription& scene);

}  // namespace loopdyn
