#pragma once

// Test-only analytic ray caster. Intersects pinhole rays with the exact
// primitive solids (no tessellation), giving an independent reference for
// the z-buffer rasterizer.

#include <limits>
#include <optional>

#include "scenecomp/forge/scene.hpp"

namespace scenecomp::oracle {

inline std::optional<double> ray_box(const Vec3& o, const Vec3& d, const Vec3& lo,
                                     const Vec3& hi, double tmin) {
  double t0 = -1e300, t1 = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 < t0) return std::nullopt;
  if (t0 >= tmin) return t0;
  if (t1 >= tmin) return t1;
  return std::nullopt;
}

inline std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r,
                                        double tmin) {
  Vec3 oc = o - c;
  double a = d.dot(d), b = 2 * oc.dot(d), k = oc.dot(oc) - r * r;
  double disc = b * b - 4 * a * k;
  if (disc < 0) return std::nullopt;
  double sq = std::sqrt(disc);
  double t0 = (-b - sq) / (2 * a), t1 = (-b + sq) / (2 * a);
  if (t0 >= tmin) return t0;
  if (t1 >= tmin) return t1;
  return std::nullopt;
}

inline std::optional<double> ray_cylinder(const Vec3& o, const Vec3& d, const CylinderPart& c,
                                          double tmin) {
  double best = std::numeric_limits<double>::infinity();
  Vec3 rel = o - c.base_center;
  double a = d.x * d.x + d.y * d.y;
  if (a > 0) {
    double b = 2 * (rel.x * d.x + rel.y * d.y);
    double k = rel.x * rel.x + rel.y * rel.y - c.radius * c.radius;
    double disc = b * b - 4 * a * k;
    if (disc >= 0) {
      double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t < tmin) continue;
        double z = rel.z + t * d.z;
        if (z >= 0 && z <= c.height) best = std::min(best, t);
      }
    }
  }
  if (d.z != 0) {
    for (double zc : {0.0, c.height}) {
      double t = (zc - rel.z) / d.z;
      if (t < tmin) continue;
      double x = rel.x + t * d.x, y = rel.y + t * d.y;
      if (x * x + y * y <= c.radius * c.radius) best = std::min(best, t);
    }
  }
  if (std::isinf(best)) return std::nullopt;
  return best;
}

inline std::optional<double> ray_part(const Vec3& o, const Vec3& d, const Part& part,
                                      double tmin) {
  if (auto* b = std::get_if<BoxPart>(&part)) return ray_box(o, d, b->lo, b->hi, tmin);
  if (auto* c = std::get_if<CylinderPart>(&part)) return ray_cylinder(o, d, *c, tmin);
  auto& s = std::get<SpherePart>(part);
  return ray_sphere(o, d, s.center, s.radius, tmin);
}

struct Hit {
  double depth = 0.0;   // camera z
  uint16_t id = 0;
  bool any = false;
};

// Pixel-center ray cast of a whole scene (instances + floor + walls).
inline Hit cast_pixel(const SceneSample& scene, const Camera& cam, double u, double v,
                      double tmin = 1e-3) {
  Vec3 dir_cam = cam.ray_direction(u, v);
  Mat3 rt = cam.world_to_cam.rotation.transposed();
  Vec3 o = cam.position();
  Vec3 d = rt * dir_cam;
  Hit hit;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](std::optional<double> t, uint16_t id) {
    if (!t) return;
    if (*t < best || (*t == best && id < hit.id)) {
      best = *t;
      hit = {*t, id, true};
    }
  };
  consider(ray_box(o, d, scene.floor.min_corner, scene.floor.max_corner, tmin), 0);
  for (const auto& wall : scene.walls)
    consider(ray_box(o, d, wall.min_corner, wall.max_corner, tmin), 0);
  for (const auto& inst : scene.instances) {
    InstancePose pose = inst.pose();
    Vec3 oo = pose.invert(o);
    Vec3 dd = (Mat3::rotation_z(-pose.z_rotation) * d) / pose.scale;
    for (const auto& part : primitive_parts(inst.primitive))
      consider(ray_part(oo, dd, part, tmin), inst.instance_id);
  }
  return hit;
}

inline void cast_view(const SceneSample& scene, const Camera& cam, DepthRaster& depth,
                      IdRaster& ids) {
  depth = DepthRaster(cam.height, cam.width, 0.0);
  ids = IdRaster(cam.height, cam.width, 0);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      Hit h = cast_pixel(scene, cam, u + 0.5, v + 0.5);
      if (h.any) {
        depth.at(v, u) = h.depth;
        ids.at(v, u) = h.id;
      }
    }
}

}  // namespace scenecomp::oracle
