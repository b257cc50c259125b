#include "loopdyn/scene.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace loopdyn {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& where, const std::string& msg) {
  throw SceneError(origin + ": " + where + ": " + msg);
}

double get_number(const json& j, const char* key, const std::string& origin,
                  const std::string& where, std::optional<double> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(origin, where, std::string("missing field '") + key + "'");
  }
  if (!j[key].is_number()) fail(origin, where, std::string("field '") + key + "' must be a number");
  return j[key].get<double>();
}

std::string get_string(const json& j, const char* key, const std::string& origin,
                       const std::string& where, std::optional<std::string> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(origin, where, std::string("missing field '") + key + "'");
  }
  if (!j[key].is_string()) fail(origin, where, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

Vec3 get_vec3(const json& j, const char* key, const std::string& origin,
              const std::string& where, std::optional<Vec3> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(origin, where, std::string("missing field '") + key + "'");
  }
  const json& v = j[key];
  if (!v.is_array() || v.size() != 3) {
    fail(origin, where, std::string("field '") + key + "' must be an array of 3 numbers");
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

Quat get_quat(const json& j, const char* key, const std::string& origin,
              const std::string& where) {
  if (!j.contains(key)) return Quat::Identity();
  const json& v = j[key];
  if (!v.is_array() || v.size() != 4) {
    fail(origin, where, std::string("field '") + key + "' must be [w,x,y,z]");
  }
  Quat q(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-6) fail(origin, where, std::string("field '") + key + "' is not a unit quaternion");
  q.normalize();
  return q;
}

Mat3 get_inertia(const json& j, const std::string& origin, const std::string& where) {
  if (!j.contains("inertia")) fail(origin, where, "missing field 'inertia'");
  const json& v = j["inertia"];
  if (v.is_array() && v.size() == 3 && v[0].is_number()) {
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>()).asDiagonal();
  }
  if (v.is_array() && v.size() == 3 && v[0].is_array()) {
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      if (!v[r].is_array() || v[r].size() != 3) fail(origin, where, "inertia rows must have 3 entries");
      for (int c = 0; c < 3; ++c) m(r, c) = v[r][c].get<double>();
    }
    return m;
  }
  fail(origin, where, "'inertia' must be a diagonal [ixx,iyy,izz] or a 3x3 matrix");
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json quat_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

}  // namespace

SceneDescription parse_scene(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SceneError(origin + ": " + e.what());
  }
  SceneDescription scene;
  scene.name = root.value("name", std::string("scene"));
  scene.gravity = get_vec3(root, "gravity", origin, "top level", Vec3(0, 0, -9.81));

  int idx = 0;
  for (const json& jb : root.value("bodies", json::array())) {
    const std::string where = "bodies[" + std::to_string(idx++) + "]";
    SceneBody b;
    b.name = get_string(jb, "name", origin, where);
    b.mass = get_number(jb, "mass", origin, where);
    b.inertia = get_inertia(jb, origin, where);
    b.pose.position = get_vec3(jb, "position", origin, where, Vec3::Zero());
    b.pose.orientation = get_quat(jb, "orientation", origin, where);
    b.twist.linear = get_vec3(jb, "linear_velocity", origin, where, Vec3::Zero());
    b.twist.angular = get_vec3(jb, "angular_velocity", origin, where, Vec3::Zero());
    scene.bodies.push_back(b);
  }

  idx = 0;
  for (const json& jj : root.value("joints", json::array())) {
    const std::string where = "joints[" + std::to_string(idx++) + "]";
    SceneJoint j;
    j.name = get_string(jj, "name", origin, where, "joint" + std::to_string(idx - 1));
    j.type = get_string(jj, "type", origin, where);
    j.parent = get_string(jj, "parent", origin, where);
    j.child = get_string(jj, "child", origin, where);
    j.frame_in_parent.position = get_vec3(jj, "parent_position", origin, where, Vec3::Zero());
    j.frame_in_parent.orientation = get_quat(jj, "parent_orientation", origin, where);
    j.frame_in_child.position = get_vec3(jj, "child_position", origin, where, Vec3::Zero());
    j.frame_in_child.orientation = get_quat(jj, "child_orientation", origin, where);
    j.axis = get_vec3(jj, "axis", origin, where, Vec3::UnitZ());
    if (jj.contains("limits")) {
      const json& v = jj["limits"];
      if (!v.is_array() || v.size() != 2) fail(origin, where, "'limits' must be [lower, upper]");
      j.limits = std::make_pair(v[0].get<double>(), v[1].get<double>());
    }
    j.kp = get_number(jj, "kp", origin, where, 0.0);
    j.kd = get_number(jj, "kd", origin, where, 0.0);
    if (jj.contains("target")) j.target = get_number(jj, "target", origin, where);
    j.target_rate = get_number(jj, "target_rate", origin, where, 0.0);
    j.armature = get_number(jj, "armature", origin, where, 0.0);
    j.damping = get_number(jj, "damping", origin, where, 0.0);
    scene.joints.push_back(j);
  }

  idx = 0;
  for (const json& jg : root.value("geoms", json::array())) {
    const std::string where = "geoms[" + std::to_string(idx++) + "]";
    SceneGeom g;
    g.body = get_string(jg, "body", origin, where);
    g.shape = get_string(jg, "shape", origin, where);
    if (g.shape == "sphere") {
      g.radius = get_number(jg, "radius", origin, where);
    } else if (g.shape == "box") {
      g.half_extents = get_vec3(jg, "half_extents", origin, where);
    } else if (g.shape == "plane") {
      g.normal = get_vec3(jg, "normal", origin, where, Vec3::UnitZ());
      g.offset = get_number(jg, "offset", origin, where, 0.0);
    } else {
      fail(origin, where, "unknown shape '" + g.shape + "'");
    }
    g.mu = get_number(jg, "mu", origin, where, 0.0);
    g.restitution = get_number(jg, "restitution", origin, where, 0.0);
    scene.geoms.push_back(g);
  }

  if (root.contains("config")) {
    const json& jc = root["config"];
    SceneConfig& c = scene.config;
    if (jc.contains("dt")) c.dt = jc["dt"].get<double>();
    if (jc.contains("integrator")) c.integrator = jc["integrator"].get<std::string>();
    if (jc.contains("backend")) c.backend = jc["backend"].get<std::string>();
    if (jc.contains("beta")) c.beta = jc["beta"].get<double>();
    const json& js = jc.contains("solver") ? jc["solver"] : jc;
    if (js.contains("rho")) c.rho = js["rho"].get<double>();
    if (js.contains("eta")) c.eta = js["eta"].get<double>();
    if (js.contains("eps")) c.eps = js["eps"].get<double>();
    if (js.contains("max_iters")) c.max_iters = js["max_iters"].get<int>();
    if (js.contains("cr_iters")) c.cr_iters = js["cr_iters"].get<int>();
  }
  return scene;
}

SceneDescription load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path);
}

std::string serialize_scene(const SceneDescription& scene) {
  json root;
  root["name"] = scene.name;
  root["gravity"] = vec3_json(scene.gravity);
  root["bodies"] = json::array();
  for (const SceneBody& b : scene.bodies) {
    json jb;
    jb["name"] = b.name;
    jb["mass"] = b.mass;
    json rows = json::array();
    for (int r = 0; r < 3; ++r) rows.push_back(json::array({b.inertia(r, 0), b.inertia(r, 1), b.inertia(r, 2)}));
    jb["inertia"] = rows;
    jb["position"] = vec3_json(b.pose.position);
    jb["orientation"] = quat_json(b.pose.orientation);
    jb["linear_velocity"] = vec3_json(b.twist.linear);
    jb["angular_velocity"] = vec3_json(b.twist.angular);
    root["bodies"].push_back(jb);
  }
  root["joints"] = json::array();
  for (const SceneJoint& j : scene.joints) {
    json jj;
    jj["name"] = j.name;
    jj["type"] = j.type;
    jj["parent"] = j.parent;
    jj["child"] = j.child;
    jj["parent_position"] = vec3_json(j.frame_in_parent.position);
    jj["parent_orientation"] = quat_json(j.frame_in_parent.orientation);
    jj["child_position"] = vec3_json(j.frame_in_child.position);
    jj["child_orientation"] = quat_json(j.frame_in_child.orientation);
    jj["axis"] = vec3_json(j.axis);
    if (j.limits) jj["limits"] = json::array({j.limits->first, j.limits->second});
    if (j.kp != 0 || j.kd != 0) {
      jj["kp"] = j.kp;
      jj["kd"] = j.kd;
      if (j.target) jj["target"] = *j.target;
      jj["target_rate"] = j.target_rate;
    }
    if (j.armature != 0) jj["armature"] = j.armature;
    if (j.damping != 0) jj["damping"] = j.damping;
    root["joints"].push_back(jj);
  }
  root["geoms"] = json::array();
  for (const SceneGeom& g : scene.geoms) {
    json jg;
    jg["body"] = g.body;
    jg["shape"] = g.shape;
    if (g.shape == "sphere") jg["radius"] = g.radius;
    if (g.shape == "box") jg["half_extents"] = vec3_json(g.half_extents);
    if (g.shape == "plane") {
      jg["normal"] = vec3_json(g.normal);
      jg["offset"] = g.offset;
    }
    jg["mu"] = g.mu;
    jg["restitution"] = g.restitution;
    root["geoms"].push_back(jg);
  }
  return root.dump(2);
}

}  // namespace loopdyn
