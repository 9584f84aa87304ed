#pragma once

#include <string>
#include <variant>
#include <vector>

#include "scenecomp/geom/ops.hpp"
#include "scenecomp/geom/types.hpp"
#include "scenecomp/rng.hpp"

namespace scenecomp {

enum class PrimitiveKind { Box, Cylinder, Sphere, LShape, Table, Stack };

inline const char* to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::LShape: return "l_shape";
    case PrimitiveKind::Table: return "table";
    case PrimitiveKind::Stack: return "stack";
  }
  return "?";
}

inline PrimitiveKind primitive_kind_from(const std::string& s) {
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "l_shape") return PrimitiveKind::LShape;
  if (s == "table") return PrimitiveKind::Table;
  if (s == "stack") return PrimitiveKind::Stack;
  SC_THROW(LoadError, "unknown primitive kind: " + s);
}

// Parametric asset standing in for a mesh library entry. The object frame
// rests on z = 0, centered in xy.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  std::vector<double> params;
  Rgb base_color{0.7, 0.7, 0.7};
};

// Convex parts in the object frame.
struct BoxPart {
  Vec3 lo, hi;
};
struct CylinderPart {
  Vec3 base_center;  // center of the bottom cap; axis +z
  double radius = 0, height = 0;
};
struct SpherePart {
  Vec3 center;
  double radius = 0;
};
using Part = std::variant<BoxPart, CylinderPart, SpherePart>;

// Uniform scale + z-rotation + translation, applied in that order.
struct InstancePose {
  double scale = 1.0;
  double z_rotation = 0.0;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const {
    return Mat3::rotation_z(z_rotation) * (p * scale) + translation;
  }
  Vec3 invert(const Vec3& w) const {
    return (Mat3::rotation_z(-z_rotation) * (w - translation)) / scale;
  }
};

inline std::vector<Part> primitive_parts(const Primitive& p) {
  const auto& a = p.params;
  auto need = [&](size_t n) { SC_CHECK(a.size() == n, "bad param count for primitive"); };
  std::vector<Part> parts;
  switch (p.kind) {
    case PrimitiveKind::Box: {
      need(3);
      parts.push_back(BoxPart{{-a[0] / 2, -a[1] / 2, 0}, {a[0] / 2, a[1] / 2, a[2]}});
      break;
    }
    case PrimitiveKind::Cylinder: {
      need(2);
      parts.push_back(CylinderPart{{0, 0, 0}, a[0], a[1]});
      break;
    }
    case PrimitiveKind::Sphere: {
      need(1);
      parts.push_back(SpherePart{{0, 0, a[0]}, a[0]});
      break;
    }
    case PrimitiveKind::LShape: {
      // W, D, H, arm width, slab thickness
      need(5);
      double w = a[0], d = a[1], h = a[2], tw = a[3], th = a[4];
      parts.push_back(BoxPart{{-w / 2, -d / 2, 0}, {w / 2, d / 2, th}});
      parts.push_back(BoxPart{{-w / 2, -d / 2, th}, {-w / 2 + tw, d / 2, h}});
      break;
    }
    case PrimitiveKind::Table: {
      // top W, top D, top thickness, leg side, total height
      need(5);
      double w = a[0], d = a[1], tt = a[2], ls = a[3], h = a[4];
      parts.push_back(BoxPart{{-w / 2, -d / 2, h - tt}, {w / 2, d / 2, h}});
      double inset = ls * 0.5;
      for (int sx = 0; sx < 2; ++sx)
        for (int sy = 0; sy < 2; ++sy) {
          double x0 = sx ? w / 2 - inset - ls : -w / 2 + inset;
          double y0 = sy ? d / 2 - inset - ls : -d / 2 + inset;
          parts.push_back(BoxPart{{x0, y0, 0}, {x0 + ls, y0 + ls, h - tt}});
        }
      break;
    }
    case PrimitiveKind::Stack: {
      // bottom w/d/h, top w/d/h (top centered on the bottom)
      need(6);
      double w1 = a[0], d1 = a[1], h1 = a[2], w2 = a[3], d2 = a[4], h2 = a[5];
      parts.push_back(BoxPart{{-w1 / 2, -d1 / 2, 0}, {w1 / 2, d1 / 2, h1}});
      parts.push_back(BoxPart{{-w2 / 2, -d2 / 2, h1}, {w2 / 2, d2 / 2, h1 + h2}});
      break;
    }
  }
  return parts;
}

// ---- per-part geometry ----

inline double part_area(const Part& part) {
  if (auto* b = std::get_if<BoxPart>(&part)) {
    Vec3 e = b->hi - b->lo;
    return 2.0 * (e.x * e.y + e.x * e.z + e.y * e.z);
  }
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    double pi = 3.14159265358979323846;
    return 2 * pi * c->radius * c->height + 2 * pi * c->radius * c->radius;
  }
  auto& s = std::get<SpherePart>(part);
  return 4 * 3.14159265358979323846 * s.radius * s.radius;
}

inline AABB part_aabb(const Part& part) {
  if (auto* b = std::get_if<BoxPart>(&part)) return {b->lo, b->hi};
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    Vec3 r{c->radius, c->radius, 0};
    return {c->base_center - r, c->base_center + Vec3{c->radius, c->radius, c->height}};
  }
  auto& s = std::get<SpherePart>(part);
  Vec3 r{s.radius, s.radius, s.radius};
  return {s.center - r, s.center + r};
}

inline bool part_contains(const Part& part, const Vec3& p, double shrink = 1e-9) {
  if (auto* b = std::get_if<BoxPart>(&part)) {
    return p.x > b->lo.x + shrink && p.x < b->hi.x - shrink && p.y > b->lo.y + shrink &&
           p.y < b->hi.y - shrink && p.z > b->lo.z + shrink && p.z < b->hi.z - shrink;
  }
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    Vec3 d = p - c->base_center;
    double rr = d.x * d.x + d.y * d.y;
    double rim = c->radius - shrink;
    return rr < rim * rim && d.z > shrink && d.z < c->height - shrink;
  }
  auto& s = std::get<SpherePart>(part);
  double rim = s.radius - shrink;
  return (p - s.center).squared_norm() < rim * rim;
}

// Signed distance to the part boundary (negative inside).
inline double part_signed_distance(const Part& part, const Vec3& p) {
  if (auto* b = std::get_if<BoxPart>(&part)) {
    Vec3 c = (b->lo + b->hi) * 0.5, h = (b->hi - b->lo) * 0.5;
    Vec3 q{std::abs(p.x - c.x) - h.x, std::abs(p.y - c.y) - h.y, std::abs(p.z - c.z) - h.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    double outside = qp.norm();
    double inside = std::min(0.0, std::max({q.x, q.y, q.z}));
    return outside + inside;
  }
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    Vec3 d = p - c->base_center;
    double dxy = std::sqrt(d.x * d.x + d.y * d.y) - c->radius;
    double dz = std::abs(d.z - c->height / 2) - c->height / 2;
    double outside = std::sqrt(std::pow(std::max(dxy, 0.0), 2) + std::pow(std::max(dz, 0.0), 2));
    double inside = std::min(0.0, std::max(dxy, dz));
    return outside + inside;
  }
  auto& s = std::get<SpherePart>(part);
  return (p - s.center).norm() - s.radius;
}

// Distance from a point to the union surface; exact for points on or outside
// the union boundary.
inline double primitive_surface_distance(const std::vector<Part>& parts, const Vec3& p) {
  double sd = 1e300;
  for (const auto& part : parts) sd = std::min(sd, part_signed_distance(part, p));
  return std::abs(sd);
}

// World-frame surface points that realize the posed part's world AABB.
// Box corners map through the pose; sphere and cylinder extremes are taken
// along the world axes directly (a z-rotation keeps their axes vertical).
inline std::vector<Vec3> part_world_extreme_points(const Part& part, const InstancePose& pose) {
  std::vector<Vec3> out;
  if (auto* b = std::get_if<BoxPart>(&part)) {
    for (int i = 0; i < 8; ++i)
      out.push_back(pose.apply({i & 1 ? b->hi.x : b->lo.x, i & 2 ? b->hi.y : b->lo.y,
                                i & 4 ? b->hi.z : b->lo.z}));
    return out;
  }
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    double r = c->radius * pose.scale;
    for (double z : {0.0, c->height}) {
      Vec3 cap = pose.apply(c->base_center + Vec3{0, 0, z});
      out.push_back(cap + Vec3{r, 0, 0});
      out.push_back(cap - Vec3{r, 0, 0});
      out.push_back(cap + Vec3{0, r, 0});
      out.push_back(cap - Vec3{0, r, 0});
    }
    return out;
  }
  auto& s = std::get<SpherePart>(part);
  Vec3 c = pose.apply(s.center);
  double r = s.radius * pose.scale;
  for (int a = 0; a < 3; ++a)
    for (double sgn : {-1.0, 1.0}) {
      Vec3 d{0, 0, 0};
      d[a] = sgn * r;
      out.push_back(c + d);
    }
  return out;
}

inline Vec3 sample_part_surface(const Part& part, RngStream& rng) {
  if (auto* b = std::get_if<BoxPart>(&part)) {
    Vec3 e = b->hi - b->lo;
    double axy = e.x * e.y, axz = e.x * e.z, ayz = e.y * e.z;
    double pick = rng.uniform() * 2 * (axy + axz + ayz);
    double u = rng.uniform(), v = rng.uniform();
    if (pick < 2 * axy) {
      double z = pick < axy ? b->lo.z : b->hi.z;
      return {b->lo.x + u * e.x, b->lo.y + v * e.y, z};
    }
    pick -= 2 * axy;
    if (pick < 2 * axz) {
      double y = pick < axz ? b->lo.y : b->hi.y;
      return {b->lo.x + u * e.x, y, b->lo.z + v * e.z};
    }
    pick -= 2 * axz;
    double x = pick < ayz ? b->lo.x : b->hi.x;
    return {x, b->lo.y + u * e.y, b->lo.z + v * e.z};
  }
  if (auto* c = std::get_if<CylinderPart>(&part)) {
    double pi = 3.14159265358979323846;
    double side = 2 * pi * c->radius * c->height, cap = pi * c->radius * c->radius;
    double pick = rng.uniform() * (side + 2 * cap);
    double phi = rng.uniform(0, 2 * pi);
    if (pick < side) {
      double z = rng.uniform(0, c->height);
      return c->base_center + Vec3{c->radius * std::cos(phi), c->radius * std::sin(phi), z};
    }
    double r = c->radius * std::sqrt(rng.uniform());
    double z = pick < side + cap ? 0.0 : c->height;
    return c->base_center + Vec3{r * std::cos(phi), r * std::sin(phi), z};
  }
  auto& s = std::get<SpherePart>(part);
  Vec3 d{rng.normal(), rng.normal(), rng.normal()};
  return s.center + d.normalized() * s.radius;
}

// Area-uniform samples of the union surface (interior samples rejected),
// plus the AABB-extreme points of each part so the sampled bounding box
// matches the analytic one.
inline PointCloud sample_primitive_surface(const Primitive& prim, const InstancePose& pose,
                                           int count, RngStream& rng) {
  auto parts = primitive_parts(prim);
  std::vector<double> cum;
  double total = 0;
  for (const auto& part : parts) {
    total += part_area(part);
    cum.push_back(total);
  }
  PointCloud pc;
  auto on_union_surface = [&](const Vec3& p, size_t own) {
    for (size_t q = 0; q < parts.size(); ++q)
      if (q != own && part_contains(parts[q], p)) return false;
    return true;
  };
  for (size_t i = 0; i < parts.size(); ++i)
    for (const Vec3& w : part_world_extreme_points(parts[i], pose))
      if (on_union_surface(pose.invert(w), i)) pc.points.push_back(w);
  int guard = count * 20;
  while (static_cast<int>(pc.points.size()) < count && guard-- > 0) {
    double pick = rng.uniform() * total;
    size_t pi = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
    if (pi >= parts.size()) pi = parts.size() - 1;
    Vec3 p = sample_part_surface(parts[pi], rng);
    if (!on_union_surface(p, pi)) continue;
    pc.points.push_back(pose.apply(p));
  }
  SC_CHECK(static_cast<int>(pc.points.size()) >= count, "surface sampling starved");
  // Store as float32 so the on-disk format round-trips bit-exactly.
  for (auto& p : pc.points) {
    p.x = double(float(p.x));
    p.y = double(float(p.y));
    p.z = double(float(p.z));
  }
  pc.colors.assign(pc.points.size(), prim.base_color);
  return pc;
}

// Analytic world AABB of the posed primitive.
inline AABB primitive_world_aabb(const Primitive& prim, const InstancePose& pose) {
  auto parts = primitive_parts(prim);
  bool first = true;
  AABB out{};
  for (const auto& part : parts) {
    for (const Vec3& w : part_world_extreme_points(part, pose)) {
      if (first) {
        out = {w, w};
        first = false;
      } else {
        out.min_corner = cwise_min(out.min_corner, w);
        out.max_corner = cwise_max(out.max_corner, w);
      }
    }
  }
  return out;
}

inline Rgb hsv_to_rgb(double h, double s, double v) {
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  double m = v - c;
  return {r + m, g + m, b + m};
}

// Kind uniform over the enumerated set, params uniform in per-kind ranges.
inline Primitive sample_primitive(RngStream& rng) {
  Primitive p;
  p.kind = static_cast<PrimitiveKind>(rng.uniform_index(6));
  switch (p.kind) {
    case PrimitiveKind::Box:
      p.params = {rng.uniform(0.22, 0.55), rng.uniform(0.22, 0.55), rng.uniform(0.22, 0.55)};
      break;
    case PrimitiveKind::Cylinder:
      p.params = {rng.uniform(0.1, 0.28), rng.uniform(0.18, 0.6)};
      break;
    case PrimitiveKind::Sphere:
      p.params = {rng.uniform(0.15, 0.3)};
      break;
    case PrimitiveKind::LShape: {
      double w = rng.uniform(0.28, 0.55), d = rng.uniform(0.18, 0.45), h = rng.uniform(0.28, 0.55);
      p.params = {w, d, h, w * rng.uniform(0.3, 0.5), h * rng.uniform(0.3, 0.5)};
      break;
    }
    case PrimitiveKind::Table: {
      double w = rng.uniform(0.45, 0.9), d = rng.uniform(0.45, 0.9);
      p.params = {w, d, rng.uniform(0.04, 0.08), rng.uniform(0.05, 0.09),
                  rng.uniform(0.35, 0.7)};
      break;
    }
    case PrimitiveKind::Stack: {
      double w1 = rng.uniform(0.22, 0.5), d1 = rng.uniform(0.22, 0.5);
      double h1 = rng.uniform(0.12, 0.3);
      p.params = {w1, d1, h1, w1 * rng.uniform(0.45, 0.9), d1 * rng.uniform(0.45, 0.9),
                  rng.uniform(0.1, 0.28)};
      break;
    }
  }
  p.base_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.35, 0.9), rng.uniform(0.45, 0.95));
  return p;
}

}  // namespace scenecomp
