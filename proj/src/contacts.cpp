#include "loopdyn/contacts.hpp"

#include <algorithm>
#include <cmath>

namespace loopdyn {

namespace {

struct GeomWorld {
  Vec3 position;  // sphere/box center; unused for planes
  Mat3 rotation;
};

GeomWorld geom_world(const MechanismModel& model, int geom, std::span<const Pose> poses) {
  const GeomSpec& g = model.geoms[geom];
  if (g.body == kWorld) return {Vec3::Zero(), Mat3::Identity()};
  return {poses[g.body].position, poses[g.body].rotation()};
}

double combined_mu(const GeomSpec& a, const GeomSpec& b) { return std::sqrt(a.mu * b.mu); }
double combined_e(const GeomSpec& a, const GeomSpec& b) {
  return std::max(a.restitution, b.restitution);
}

void sphere_plane(const MechanismModel& model, int sphere, int plane,
                  std::span<const Pose> poses, double margin, std::vector<ContactPoint>& out) {
  const GeomSpec& gs = model.geoms[sphere];
  const GeomSpec& gp = model.geoms[plane];
  const Vec3 c = geom_world(model, sphere, poses).position;
  const double dist = gp.plane_normal.dot(c) - gp.plane_offset;
  const double depth = gs.radius - dist;
  if (depth <= -margin) return;
  ContactPoint cp;
  cp.geom_a = sphere;
  cp.geom_b = plane;
  cp.normal = gp.plane_normal;
  cp.position = c - gs.radius * gp.plane_normal;
  cp.depth = depth;
  cp.mu = combined_mu(gs, gp);
  cp.restitution = combined_e(gs, gp);
  out.push_back(cp);
}

void sphere_sphere(const MechanismModel& model, int a, int b, std::span<const Pose> poses,
                   double margin, std::vector<ContactPoint>& out) {
  const GeomSpec& ga = model.geoms[a];
  const GeomSpec& gb = model.geoms[b];
  const Vec3 ca = geom_world(model, a, poses).position;
  const Vec3 cb = geom_world(model, b, poses).position;
  Vec3 delta = ca - cb;
  double dist = delta.norm();
  const double depth = ga.radius + gb.radius - dist;
  if (depth <= -margin) return;
  ContactPoint cp;
  cp.geom_a = a;
  cp.geom_b = b;
  cp.normal = dist > 1e-12 ? Vec3(delta / dist) : Vec3::UnitZ();
  cp.position = 0.5 * ((ca - ga.radius * cp.normal) + (cb + gb.radius * cp.normal));
  cp.depth = depth;
  cp.mu = combined_mu(ga, gb);
  cp.restitution = combined_e(ga, gb);
  out.push_back(cp);
}

void box_plane(const MechanismModel& model, int box, int plane, std::span<const Pose> poses,
               double margin, std::vector<ContactPoint>& out) {
  const GeomSpec& gb = model.geoms[box];
  const GeomSpec& gp = model.geoms[plane];
  const GeomWorld w = geom_world(model, box, poses);

  struct Corner {
    int index;
    Vec3 point;
    double depth;
  };
  std::vector<Corner> hits;
  for (int k = 0; k < 8; ++k) {
    Vec3 local((k & 1) ? gb.half_extents.x() : -gb.half_extents.x(),
               (k & 2) ? gb.half_extents.y() : -gb.half_extents.y(),
               (k & 4) ? gb.half_extents.z() : -gb.half_extents.z());
    const Vec3 p = w.position + w.rotation * local;
    const double depth = gp.plane_offset - gp.plane_normal.dot(p);
    if (depth > -margin) hits.push_back({k, p, depth});
  }
  // A box contributes at most 4 corner contacts: keep the deepest, emitted in
  // corner-index order for determinism.
  if (hits.size() > 4) {
    std::stable_sort(hits.begin(), hits.end(),
                     [](const Corner& a, const Corner& b) { return a.depth > b.depth; });
    hits.resize(4);
  }
  std::sort(hits.begin(), hits.end(),
            [](const Corner& a, const Corner& b) { return a.index < b.index; });
  for (const Corner& c : hits) {
    ContactPoint cp;
    cp.geom_a = box;
    cp.geom_b = plane;
    cp.normal = gp.plane_normal;
    cp.position = c.point;
    cp.depth = c.depth;
    cp.mu = combined_mu(gb, gp);
    cp.restitution = combined_e(gb, gp);
    out.push_back(cp);
  }
}

}  // namespace

Mat3 contact_frame(const Vec3& normal) {
  const Eigen::Matrix<double, 3, 2> t = orthonormal_complement(normal);
  Mat3 frame;
  frame.col(0) = normal;
  frame.col(1) = t.col(0);
  frame.col(2) = t.col(1);
  return frame;
}

std::vector<ContactPoint> collide(const MechanismModel& model, std::span<const Pose> poses,
                                  double margin) {
  std::vector<ContactPoint> out;
  const int n = static_cast<int>(model.geoms.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const GeomSpec& gi = model.geoms[i];
      const GeomSpec& gj = model.geoms[j];
      if (gi.body == gj.body) continue;
      if (gi.body == kWorld && gj.body == kWorld) continue;
      using S = GeomSpec::Shape;
      if (gi.shape == S::Sphere && gj.shape == S::Sphere) {
        sphere_sphere(model, i, j, poses, margin, out);
      } else if (gi.shape == S::Sphere && gj.shape == S::Plane) {
        sphere_plane(model, i, j, poses, margin, out);
      } else if (gi.shape == S::Plane && gj.shape == S::Sphere) {
        sphere_plane(model, j, i, poses, margin, out);
      } else if (gi.shape == S::Box && gj.shape == S::Plane) {
        box_plane(model, i, j, poses, margin, out);
      } else if (gi.shape == S::Plane && gj.shape == S::Box) {
        box_plane(model, j, i, poses, margin, out);
      }
      // Anything else was rejected at model build.
    }
  }
  return out;
}

std::vector<ContactInit> match_warmstart(const ReactionCache& cache,
                                         const std::vector<ContactPoint>& contacts,
                                         double tolerance) {
  std::vector<ContactInit> init(contacts.size());
  struct Candidate {
    double dist;
    int entry;
    int contact;
  };
  std::vector<Candidate> candidates;
  for (size_t e = 0; e < cache.entries.size(); ++e) {
    const ReactionCacheEntry& entry = cache.entries[e];
    for (size_t c = 0; c < contacts.size(); ++c) {
      if (entry.geom_a != contacts[c].geom_a || entry.geom_b != contacts[c].geom_b) continue;
      const double d = (entry.position - contacts[c].position).norm();
      if (d <= tolerance) {
        candidates.push_back({d, static_cast<int>(e), static_cast<int>(c)});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.entry != b.entry) return a.entry < b.entry;
    return a.contact < b.contact;
  });
  std::vector<bool> entry_used(cache.entries.size(), false);
  std::vector<bool> contact_done(contacts.size(), false);
  for (const Candidate& cand : candidates) {
    if (entry_used[cand.entry] || contact_done[cand.contact]) continue;
    entry_used[cand.entry] = true;
    contact_done[cand.contact] = true;
    init[cand.contact].impulse = cache.entries[cand.entry].impulse;
    init[cand.contact].dual = cache.entries[cand.entry].dual;
  }
  return init;
}

}  // namespace loopdyn
