#pragma once

#include <vector>

#include "scenecomp/forge/primitives.hpp"
#include "scenecomp/geom/types.hpp"

namespace scenecomp {

struct Triangle {
  Vec3 a, b, c;       // world space
  uint16_t id = 0;     // owning instance; 0 = floor/walls
  Rgb color{0.7, 0.7, 0.7};
};

// Curved surfaces are tessellated so that the chordal depth error stays
// below this budget; the raster consistency contract allows 1e-4 m total.
inline constexpr double kTessellationTolerance = 4e-5;

namespace detail {

inline void push_quad(std::vector<Triangle>& tris, const Vec3& p0, const Vec3& p1,
                      const Vec3& p2, const Vec3& p3, uint16_t id, const Rgb& col) {
  tris.push_back({p0, p1, p2, id, col});
  tris.push_back({p0, p2, p3, id, col});
}

inline void tessellate_box(std::vector<Triangle>& tris, const BoxPart& b,
                           const InstancePose& pose, uint16_t id, const Rgb& col) {
  Vec3 v[8];
  for (int i = 0; i < 8; ++i)
    v[i] = pose.apply({i & 1 ? b.hi.x : b.lo.x, i & 2 ? b.hi.y : b.lo.y,
                       i & 4 ? b.hi.z : b.lo.z});
  static const int faces[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                  {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (auto& f : faces) push_quad(tris, v[f[0]], v[f[1]], v[f[2]], v[f[3]], id, col);
}

inline int circle_segments(double world_radius, double tol) {
  if (world_radius <= tol) return 8;
  double theta = 2.0 * std::acos(std::max(0.0, 1.0 - tol / world_radius));
  int n = static_cast<int>(std::ceil(2 * 3.14159265358979323846 / std::max(theta, 1e-4)));
  return std::clamp(n, 12, 512);
}

inline void tessellate_cylinder(std::vector<Triangle>& tris, const CylinderPart& c,
                                const InstancePose& pose, uint16_t id, const Rgb& col) {
  double wr = c.radius * pose.scale;
  int n = circle_segments(wr, kTessellationTolerance);
  double pi = 3.14159265358979323846;
  std::vector<Vec3> lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    double phi = 2 * pi * i / n;
    Vec3 rim{c.radius * std::cos(phi), c.radius * std::sin(phi), 0};
    lo[i] = pose.apply(c.base_center + rim);
    hi[i] = pose.apply(c.base_center + rim + Vec3{0, 0, c.height});
  }
  Vec3 clo = pose.apply(c.base_center);
  Vec3 chi = pose.apply(c.base_center + Vec3{0, 0, c.height});
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    push_quad(tris, lo[i], lo[j], hi[j], hi[i], id, col);
    tris.push_back({clo, lo[j], lo[i], id, col});
    tris.push_back({chi, hi[i], hi[j], id, col});
  }
}

inline void tessellate_sphere(std::vector<Triangle>& tris, const SpherePart& s,
                              const InstancePose& pose, uint16_t id, const Rgb& col) {
  double wr = s.radius * pose.scale;
  // The quad diagonal spans about theta * sqrt(2); halve the tolerance.
  int slices = circle_segments(wr, kTessellationTolerance * 0.5);
  int stacks = std::max(6, slices / 2);
  double pi = 3.14159265358979323846;
  auto at = [&](int st, int sl) {
    double theta = pi * st / stacks;          // 0 at +z pole
    double phi = 2 * pi * sl / slices;
    Vec3 d{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
    return pose.apply(s.center + d * s.radius);
  };
  for (int st = 0; st < stacks; ++st) {
    for (int sl = 0; sl < slices; ++sl) {
      Vec3 p00 = at(st, sl), p01 = at(st, sl + 1);
      Vec3 p10 = at(st + 1, sl), p11 = at(st + 1, sl + 1);
      if (st == 0) {
        tris.push_back({p00, p11, p10, id, col});  // north cap fan
      } else if (st + 1 == stacks) {
        tris.push_back({p00, p01, p10, id, col});  // south cap fan
      } else {
        tris.push_back({p00, p01, p11, id, col});
        tris.push_back({p00, p11, p10, id, col});
      }
    }
  }
}

}  // namespace detail

inline void tessellate_primitive(std::vector<Triangle>& tris, const Primitive& prim,
                                 const InstancePose& pose, uint16_t id) {
  for (const auto& part : primitive_parts(prim)) {
    if (auto* b = std::get_if<BoxPart>(&part))
      detail::tessellate_box(tris, *b, pose, id, prim.base_color);
    else if (auto* c = std::get_if<CylinderPart>(&part))
      detail::tessellate_cylinder(tris, *c, pose, id, prim.base_color);
    else
      detail::tessellate_sphere(tris, std::get<SpherePart>(part), pose, id,
                                prim.base_color);
  }
}

struct RasterOutput {
  DepthRaster depth;   // meters; 0 = no hit
  IdRaster ids;        // 0 = floor/walls/background
  RgbRaster rgb;       // flat Lambertian shading, quantized to 8 bits
};

// Z-buffer rasterizer. Coverage comes from screen-space edge functions at
// pixel centers; depth is the exact ray/plane intersection, so planar
// geometry carries no interpolation error. Strictly nearest wins; depth
// ties go to the lower instance id.
inline RasterOutput rasterize_triangles(const std::vector<Triangle>& tris,
                                        const Camera& camera) {
  camera.validate();
  const int w = camera.width, h = camera.height;
  RasterOutput out;
  out.depth = DepthRaster(h, w, 0.0);
  out.ids = IdRaster(h, w, 0);
  out.rgb = RgbRaster(h, w);
  std::vector<double> zbuf(size_t(h) * w, 1e300);

  const double znear = 1e-3;
  const Vec3 light = Vec3{0.4, 0.25, 0.88}.normalized();

  for (const auto& tri : tris) {
    Vec3 cam[3] = {camera.world_to_camera(tri.a), camera.world_to_camera(tri.b),
                   camera.world_to_camera(tri.c)};
    // Clip against z = znear (Sutherland-Hodgman), then fan-triangulate.
    Vec3 poly[4];
    int np = 0;
    for (int i = 0; i < 3; ++i) {
      const Vec3& cur = cam[i];
      const Vec3& nxt = cam[(i + 1) % 3];
      bool cin = cur.z >= znear, nin = nxt.z >= znear;
      if (cin) poly[np++] = cur;
      if (cin != nin) {
        double t = (znear - cur.z) / (nxt.z - cur.z);
        poly[np++] = cur + (nxt - cur) * t;
      }
    }
    if (np < 3) continue;

    Vec3 n = (cam[1] - cam[0]).cross(cam[2] - cam[0]);
    double ndotp = n.dot(cam[0]);

    // Flat shading from the world-space normal, two-sided.
    Vec3 wn = (tri.b - tri.a).cross(tri.c - tri.a).normalized();
    double lambert = 0.25 + 0.75 * std::abs(wn.dot(light));
    Rgb shade{tri.color.r * lambert, tri.color.g * lambert, tri.color.b * lambert};
    Rgb q{std::round(std::clamp(shade.r, 0.0, 1.0) * 255.0) / 255.0,
          std::round(std::clamp(shade.g, 0.0, 1.0) * 255.0) / 255.0,
          std::round(std::clamp(shade.b, 0.0, 1.0) * 255.0) / 255.0};

    for (int f = 1; f + 1 < np; ++f) {
      double sx[3], sy[3];
      const Vec3* v[3] = {&poly[0], &poly[f], &poly[f + 1]};
      for (int i = 0; i < 3; ++i) {
        double u, vv, d;
        if (!camera.project(*v[i], u, vv, d)) goto next_fan;
        sx[i] = u;
        sy[i] = vv;
      }
      {
        double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
        if (area == 0) continue;
        double sgn = area > 0 ? 1.0 : -1.0;
        int u0 = std::max(0, int(std::floor(std::min({sx[0], sx[1], sx[2]}) - 0.5)));
        int u1 = std::min(w - 1, int(std::ceil(std::max({sx[0], sx[1], sx[2]}) - 0.5)));
        int v0 = std::max(0, int(std::floor(std::min({sy[0], sy[1], sy[2]}) - 0.5)));
        int v1 = std::min(h - 1, int(std::ceil(std::max({sy[0], sy[1], sy[2]}) - 0.5)));
        for (int py = v0; py <= v1; ++py) {
          double cyp = py + 0.5;
          for (int px = u0; px <= u1; ++px) {
            double cxp = px + 0.5;
            double e0 = sgn * ((sx[1] - sx[0]) * (cyp - sy[0]) - (cxp - sx[0]) * (sy[1] - sy[0]));
            double e1 = sgn * ((sx[2] - sx[1]) * (cyp - sy[1]) - (cxp - sx[1]) * (sy[2] - sy[1]));
            double e2 = sgn * ((sx[0] - sx[2]) * (cyp - sy[2]) - (cxp - sx[2]) * (sy[0] - sy[2]));
            if (e0 < 0 || e1 < 0 || e2 < 0) continue;
            Vec3 dir = camera.ray_direction(cxp, cyp);
            double denom = n.dot(dir);
            if (denom == 0) continue;
            double t = ndotp / denom;  // depth, since dir.z == 1
            if (t < znear) continue;
            size_t idx = size_t(py) * w + px;
            if (t < zbuf[idx] || (t == zbuf[idx] && tri.id < out.ids.data[idx])) {
              zbuf[idx] = t;
              out.depth.data[idx] = double(float(t));
              out.ids.data[idx] = tri.id;
              out.rgb.data[idx] = q;
            }
          }
        }
      }
    next_fan:;
    }
  }
  return out;
}

}  // namespace scenecomp
