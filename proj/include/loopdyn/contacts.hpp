#pragma once

#include <span>
#include <vector>

#include "loopdyn/model.hpp"
#include "loopdyn/se3.hpp"

namespace loopdyn {

struct ContactPoint {
  int geom_a = -1;  // the moving geom of the pair
  int geom_b = -1;
  Vec3 position = Vec3::Zero();  // world
  Vec3 normal = Vec3::UnitZ();   // unit, from b toward a
  double depth = 0.0;            // > 0 when penetrating
  double mu = 0.0;               // combined: sqrt(mu_a * mu_b)
  double restitution = 0.0;      // combined: max(e_a, e_b)
};

// Rows of the contact frame: columns are (normal, t1, t2), the tangents built
// deterministically from the world axis least aligned with the normal so
// warm-started tangential impulses stay meaningful across steps.
Mat3 contact_frame(const Vec3& normal);

// Analytic narrow phase over the supported shape pairs (sphere-plane,
// sphere-sphere, box-plane). Returns contacts with depth > -margin, ordered by
// geom pair then corner index. Unsupported pairs were rejected at model build.
std::vector<ContactPoint> collide(const MechanismModel& model, std::span<const Pose> poses,
                                  double margin);

struct ReactionCacheEntry {
  int geom_a = -1;
  int geom_b = -1;
  Vec3 position = Vec3::Zero();
  Vec3 impulse = Vec3::Zero();  // contact frame (n, t1, t2)
  Vec3 dual = Vec3::Zero();     // cached dual iterate, contact frame
};

struct ReactionCache {
  std::vector<ReactionCacheEntry> entries;
};

struct ContactInit {
  Vec3 impulse = Vec3::Zero();
  Vec3 dual = Vec3::Zero();
};

// Greedy nearest-first matching of cached reactions to the new contact set:
// same geom pair, position within `tolerance`, each cache entry consumed at
// most once. Unmatched contacts start from zero.
std::vector<ContactInit> match_warmstart(const ReactionCache& cache,
                                         const std::vector<ContactPoint>& contacts,
                                         double tolerance = 1e-3);

}  // namespace loopdyn
