#pragma once

#include <algorithm>

#include "scenecomp/geom/grid.hpp"
#include "scenecomp/geom/types.hpp"

namespace scenecomp {

// Side length substituted for a degenerate (zero-extent) box before the
// expansion factor is applied.
inline constexpr double kDegenerateBoxSide = 1e-3;

// Default binarization threshold everywhere a grid is thresholded.
inline constexpr double kOccupancyThreshold = 0.5;

// One world-space point per true mask pixel via pinhole inverse projection
// at pixel centers. Empty mask yields an empty cloud.
inline PointCloud backproject_depth(const DepthRaster& depth, const MaskRaster& mask,
                                    const Camera& camera) {
  SC_CHECK(depth.height == camera.height && depth.width == camera.width,
           "depth raster dims must match camera");
  SC_CHECK(mask.height == depth.height && mask.width == depth.width,
           "mask dims must match depth");
  RigidTransform cam_to_world = camera.world_to_cam.inverse();
  PointCloud pc;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!mask.at(v, u)) continue;
      double d = depth.at(v, u);
      SC_CHECK(std::isfinite(d) && d > 0, "masked depth must be finite and positive");
      Vec3 dir = camera.ray_direction(u + 0.5, v + 0.5);
      pc.points.push_back(cam_to_world.apply(dir * d));
    }
  }
  return pc;
}

inline AABB compute_aabb(const PointCloud& pc) {
  if (pc.empty()) SC_THROW(EmptyGeometryError, "compute_aabb on empty cloud");
  Vec3 mn = pc.points[0], mx = pc.points[0];
  for (const auto& p : pc.points) {
    mn = cwise_min(mn, p);
    mx = cwise_max(mx, p);
  }
  return {mn, mx};
}

// Conservative cube centered at b_vis's center with side factor * max side.
// A degenerate input box gets side kDegenerateBoxSide before scaling.
inline AABB expand_bound(const AABB& b_vis, double factor = 4.0) {
  SC_CHECK(b_vis.valid(), "invalid box");
  SC_CHECK(factor > 0, "factor must be positive");
  double side = std::max(b_vis.max_side(), kDegenerateBoxSide) * factor;
  Vec3 c = b_vis.center();
  Vec3 h{side * 0.5, side * 0.5, side * 0.5};
  return {c - h, c + h};
}

inline CubeFrame cube_frame_of(const AABB& box, int resolution) {
  double side = std::max(box.max_side(), kDegenerateBoxSide);
  Vec3 c = box.center();
  Vec3 h{side * 0.5, side * 0.5, side * 0.5};
  return CubeFrame{{c - h, c + h}, resolution};
}

// Affine map sending frame.world_box to [-0.5, 0.5]^3.
inline PointCloud normalize_points(const PointCloud& pc, const CubeFrame& frame) {
  frame.validate();
  PointCloud out;
  out.points.reserve(pc.points.size());
  for (const auto& p : pc.points) out.points.push_back(frame.world_to_unit(p));
  out.colors = pc.colors;
  return out;
}

inline PointCloud denormalize_points(const PointCloud& pc, const CubeFrame& frame) {
  frame.validate();
  PointCloud out;
  out.points.reserve(pc.points.size());
  for (const auto& p : pc.points) out.points.push_back(frame.unit_to_world(p));
  out.colors = pc.colors;
  return out;
}

// Volumetric IoU of two axis-aligned boxes; 0 when the union has no volume.
inline double aabb_iou(const AABB& a, const AABB& b) {
  SC_CHECK(a.valid() && b.valid(), "invalid box");
  Vec3 lo = cwise_max(a.min_corner, b.min_corner);
  Vec3 hi = cwise_min(a.max_corner, b.max_corner);
  double inter = std::max(0.0, hi.x - lo.x) * std::max(0.0, hi.y - lo.y) *
                 std::max(0.0, hi.z - lo.z);
  double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace scenecomp
