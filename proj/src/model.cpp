#include "loopdyn/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace loopdyn {

namespace {

JointType parse_joint_type(const std::string& s, const std::string& joint_name) {
  if (s == "fixed") return JointType::Fixed;
  if (s == "revolute") return JointType::Revolute;
  if (s == "prismatic") return JointType::Prismatic;
  if (s == "spherical") return JointType::Spherical;
  throw ModelError(ModelError::Code::InvalidReference,
                   "joint '" + joint_name + "': unknown type '" + s + "'");
}

void validate_inertia(const BodySpec& b) {
  if (!(b.inertia.mass > 0)) {
    throw ModelError(ModelError::Code::BadInertia,
                     "body '" + b.name + "': mass must be positive");
  }
  const Mat3& in = b.inertia.body_inertia;
  if ((in - in.transpose()).norm() > 1e-9 * std::max(1.0, in.norm())) {
    throw ModelError(ModelError::Code::BadInertia,
                     "body '" + b.name + "': inertia tensor is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(in);
  const Vec3 ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0)) {
    throw ModelError(ModelError::Code::BadInertia,
                     "body '" + b.name + "': inertia tensor is not positive definite");
  }
  // Principal moments of any rigid body satisfy the triangle inequality.
  if (ev[2] > ev[0] + ev[1] + 1e-9 * ev[2]) {
    throw ModelError(ModelError::Code::BadInertia,
                     "body '" + b.name + "': principal moments violate the triangle inequality");
  }
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool is_static_geom(const GeomSpec& g) { return g.body == kWorld; }

bool pair_supported(GeomSpec::Shape a, GeomSpec::Shape b) {
  using S = GeomSpec::Shape;
  if (a == S::Sphere && b == S::Sphere) return true;
  if ((a == S::Sphere && b == S::Plane) || (a == S::Plane && b == S::Sphere)) return true;
  if ((a == S::Box && b == S::Plane) || (a == S::Plane && b == S::Box)) return true;
  return false;
}

const char* shape_name(GeomSpec::Shape s) {
  switch (s) {
    case GeomSpec::Shape::Sphere: return "sphere";
    case GeomSpec::Shape::Plane: return "plane";
    case GeomSpec::Shape::Box: return "box";
  }
  return "?";
}

}  // namespace

int joint_row_count(JointType type) {
  switch (type) {
    case JointType::Fixed: return 6;
    case JointType::Revolute: return 5;
    case JointType::Prismatic: return 5;
    case JointType::Spherical: return 3;
  }
  return 0;
}

int MechanismModel::body_index(const std::string& name) const {
  if (name == "world") return kWorld;
  for (int i = 0; i < n_bodies(); ++i) {
    if (bodies[i].name == name) return i;
  }
  throw ModelError(ModelError::Code::InvalidReference, "unknown body '" + name + "'");
}

int MechanismModel::joint_index(const std::string& name) const {
  for (size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

MechanismModel build_model(const SceneDescription& scene) {
  MechanismModel m;
  m.name = scene.name;
  m.gravity = scene.gravity;

  std::map<std::string, int> body_ids;
  for (const SceneBody& sb : scene.bodies) {
    if (sb.name == "world" || body_ids.count(sb.name)) {
      throw ModelError(ModelError::Code::DuplicateName,
                       "body name '" + sb.name + "' is reserved or duplicated");
    }
    body_ids[sb.name] = static_cast<int>(m.bodies.size());
    BodySpec b;
    b.name = sb.name;
    b.inertia.mass = sb.mass;
    b.inertia.body_inertia = sb.inertia;
    b.initial_pose = sb.pose;
    b.initial_pose.orientation.normalize();
    b.initial_twist = sb.twist;
    validate_inertia(b);
    m.bodies.push_back(b);
  }

  auto resolve = [&](const std::string& name, const std::string& ctx) -> int {
    if (name == "world") return kWorld;
    auto it = body_ids.find(name);
    if (it == body_ids.end()) {
      throw ModelError(ModelError::Code::InvalidReference, ctx + ": unknown body '" + name + "'");
    }
    return it->second;
  };

  std::map<std::string, int> joint_names;
  for (const SceneJoint& sj : scene.joints) {
    if (joint_names.count(sj.name)) {
      throw ModelError(ModelError::Code::DuplicateName, "duplicate joint name '" + sj.name + "'");
    }
    joint_names[sj.name] = static_cast<int>(m.joints.size());

    JointSpec j;
    j.name = sj.name;
    j.type = parse_joint_type(sj.type, sj.name);
    j.parent = resolve(sj.parent, "joint '" + sj.name + "'");
    j.child = resolve(sj.child, "joint '" + sj.name + "'");
    if (j.child == kWorld) {
      throw ModelError(ModelError::Code::InvalidReference,
                       "joint '" + sj.name + "': child must be a body (use parent=\"world\" to anchor)");
    }
    if (j.parent == j.child) {
      throw ModelError(ModelError::Code::InvalidReference,
                       "joint '" + sj.name + "': parent and child must differ");
    }
    j.frame_in_parent = sj.frame_in_parent;
    j.frame_in_child = sj.frame_in_child;

    const bool has_axis = j.type == JointType::Revolute || j.type == JointType::Prismatic;
    if (has_axis) {
      const double n = sj.axis.norm();
      if (std::abs(n - 1.0) > 1e-6) {
        throw ModelError(ModelError::Code::NonUnitAxis,
                         "joint '" + sj.name + "': axis must be unit length");
      }
      j.axis = sj.axis / n;
    }

    if (sj.limits) {
      if (!has_axis) {
        throw ModelError(ModelError::Code::UnsupportedOnJointType,
                         "joint '" + sj.name + "': limits are only supported on revolute/prismatic joints");
      }
      if (!(sj.limits->first < sj.limits->second)) {
        throw ModelError(ModelError::Code::BadLimits,
                         "joint '" + sj.name + "': lower limit must be below upper limit");
      }
      j.has_limits = true;
      j.lower = sj.limits->first;
      j.upper = sj.limits->second;
    }

    if (sj.kp < 0 || sj.kd < 0 || sj.armature < 0 || sj.damping < 0) {
      throw ModelError(ModelError::Code::BadLimits,
                       "joint '" + sj.name + "': gains, armature and damping must be nonnegative");
    }
    if ((sj.kp > 0 || sj.kd > 0 || sj.armature > 0 || sj.damping > 0) && !has_axis) {
      throw ModelError(ModelError::Code::UnsupportedOnJointType,
                       "joint '" + sj.name + "': actuation/armature/damping need a joint coordinate "
                       "(revolute or prismatic)");
    }
    j.has_actuation = sj.kp > 0 || sj.kd > 0;
    j.kp = sj.kp;
    j.kd = sj.kd;
    j.target_rate = sj.target_rate;
    j.armature = sj.armature;
    j.damping = sj.damping;
    m.joints.push_back(j);
  }

  for (const SceneGeom& sg : scene.geoms) {
    GeomSpec g;
    g.body = resolve(sg.body, "geom on '" + sg.body + "'");
    if (sg.shape == "sphere") {
      g.shape = GeomSpec::Shape::Sphere;
      if (!(sg.radius > 0)) {
        throw ModelError(ModelError::Code::BadGeometry, "sphere geom needs a positive radius");
      }
      g.radius = sg.radius;
    } else if (sg.shape == "box") {
      g.shape = GeomSpec::Shape::Box;
      if (!(sg.half_extents.minCoeff() > 0)) {
        throw ModelError(ModelError::Code::BadGeometry, "box geom needs positive half extents");
      }
      g.half_extents = sg.half_extents;
    } else if (sg.shape == "plane") {
      g.shape = GeomSpec::Shape::Plane;
      const double n = sg.normal.norm();
      if (n < 1e-12) throw ModelError(ModelError::Code::BadGeometry, "plane normal must be nonzero");
      g.plane_normal = sg.normal / n;
      g.plane_offset = sg.offset;
    } else {
      throw ModelError(ModelError::Code::BadGeometry, "unknown geom shape '" + sg.shape + "'");
    }
    if (g.shape == GeomSpec::Shape::Plane && g.body != kWorld) {
      throw ModelError(ModelError::Code::BadGeometry, "planes must be attached to the world");
    }
    if (g.shape != GeomSpec::Shape::Plane && g.body == kWorld) {
      throw ModelError(ModelError::Code::BadGeometry, "only planes may be attached to the world");
    }
    g.mu = sg.mu;
    g.restitution = sg.restitution;
    if (g.mu < 0) throw ModelError(ModelError::Code::BadGeometry, "friction must be nonnegative");
    if (g.restitution < 0 || g.restitution > 1) {
      throw ModelError(ModelError::Code::BadGeometry, "restitution must lie in [0, 1]");
    }
    m.geoms.push_back(g);
  }

  // Unsupported collision pairs are a build error, not a runtime one. Pairs of
  // world-fixed geoms never collide and are skipped.
  for (size_t a = 0; a < m.geoms.size(); ++a) {
    for (size_t b = a + 1; b < m.geoms.size(); ++b) {
      const GeomSpec& ga = m.geoms[a];
      const GeomSpec& gb = m.geoms[b];
      if (ga.body == gb.body) continue;
      if (is_static_geom(ga) && is_static_geom(gb)) continue;
      if (!pair_supported(ga.shape, gb.shape)) {
        throw ModelError(ModelError::Code::UnsupportedCollisionPair,
                         std::string("unsupported collision pair: ") + shape_name(ga.shape) +
                             "-" + shape_name(gb.shape));
      }
    }
  }

  // Row layout: structural bilateral rows first (declaration order), then the
  // joint-dynamics rows. Limits and contacts are appended at assembly time.
  m.joint_layout.resize(m.joints.size());
  int row = 0;
  for (size_t i = 0; i < m.joints.size(); ++i) {
    JointLayout& lay = m.joint_layout[i];
    lay.row_offset = row;
    lay.row_count = joint_row_count(m.joints[i].type);
    row += lay.row_count;
    if (m.joints[i].type == JointType::Revolute || m.joints[i].type == JointType::Prismatic) {
      lay.complement = orthonormal_complement(m.joints[i].axis);
    }
  }
  m.n_bilateral_rows = row;
  int dyn = 0;
  for (size_t i = 0; i < m.joints.size(); ++i) {
    JointLayout& lay = m.joint_layout[i];
    lay.dyn_offset = dyn;
    lay.has_pd = m.joints[i].has_actuation;
    lay.has_armature = m.joints[i].armature > 0;
    lay.has_damping = m.joints[i].damping > 0;
    lay.dyn_count = (lay.has_pd ? 1 : 0) + (lay.has_armature ? 1 : 0) + (lay.has_damping ? 1 : 0);
    dyn += lay.dyn_count;
  }
  m.n_dynamics_rows = dyn;

  // Independent cycles of the body-joint graph, world counted as a vertex:
  // edges - vertices + components.
  const int n_vertices = m.n_bodies() + 1;
  UnionFind uf(n_vertices);
  const int world_vertex = m.n_bodies();
  for (const JointSpec& j : m.joints) {
    const int p = j.parent == kWorld ? world_vertex : j.parent;
    uf.unite(p, j.child);
  }
  int components = 0;
  for (int v = 0; v < n_vertices; ++v) {
    if (uf.find(v) == v) ++components;
  }
  m.n_loops = static_cast<int>(m.joints.size()) - n_vertices + components;

  // Default PD setpoint: hold the build-time coordinate unless the scene says
  // otherwise.
  std::vector<Pose> poses;
  poses.reserve(m.bodies.size());
  for (const BodySpec& b : m.bodies) poses.push_back(b.initial_pose);
  for (size_t i = 0; i < m.joints.size(); ++i) {
    if (!m.joints[i].has_actuation) continue;
    if (scene.joints[i].target) {
      m.joints[i].target = *scene.joints[i].target;
    } else {
      m.joints[i].target = joint_coordinate(m, static_cast<int>(i), poses);
    }
  }
  return m;
}

JointFrames joint_world_frames(const MechanismModel& model, int joint, std::span<const Pose> poses) {
  const JointSpec& j = model.joints[joint];
  JointFrames f;
  if (j.parent == kWorld) {
    f.anchor_parent = j.frame_in_parent.position;
    f.frame_parent = j.frame_in_parent.rotation();
  } else {
    const Pose& p = poses[j.parent];
    f.anchor_parent = p.transform(j.frame_in_parent.position);
    f.frame_parent = p.rotation() * j.frame_in_parent.rotation();
  }
  const Pose& c = poses[j.child];
  f.anchor_child = c.transform(j.frame_in_child.position);
  f.frame_child = c.rotation() * j.frame_in_child.rotation();
  return f;
}

double joint_coordinate(const MechanismModel& model, int joint, std::span<const Pose> poses) {
  const JointSpec& j = model.joints[joint];
  const JointFrames f = joint_world_frames(model, joint, poses);
  if (j.type == JointType::Revolute) {
    // Twist angle of the relative rotation about the joint axis, in (-pi, pi].
    Quat rel(f.frame_parent.transpose() * f.frame_child);
    if (rel.w() < 0) rel.coeffs() = -rel.coeffs();
    return 2.0 * std::atan2(j.axis.dot(rel.vec()), rel.w());
  }
  if (j.type == JointType::Prismatic) {
    return j.axis.dot(f.frame_parent.transpose() * (f.anchor_child - f.anchor_parent));
  }
  throw ModelError(ModelError::Code::WrongJointType,
                   "joint '" + j.name + "' has no scalar coordinate");
}

}  // namespace loopdyn
