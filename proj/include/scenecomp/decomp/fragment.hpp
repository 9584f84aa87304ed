#pragma once

#include "scenecomp/decomp/depth_model.hpp"
#include "scenecomp/forge/scene.hpp"
#include "scenecomp/geom/grid.hpp"
#include "scenecomp/geom/ops.hpp"

namespace scenecomp {

inline constexpr int kMinVisiblePixels = 16;

// An instance's visible world geometry from one view, back-projected from
// the alpha-mixed depth.
struct Fragment {
  uint16_t instance_id = 0;
  PointCloud points;   // world space, colored when the view has rgb
  MaskRaster mask;
  double alpha = 0.0;
  int source_view = 0;
};

struct FragmentOptions {
  double severity = 0.1;      // depth-estimator surrogate strength
  int min_pixels = kMinVisiblePixels;
};

inline Fragment extract_fragment(const SceneSample& sample, int view, uint16_t instance_id,
                                 double alpha, RngStream& rng,
                                 const FragmentOptions& opt = {}) {
  SC_CHECK(view >= 0 && view < static_cast<int>(sample.ids.size()), "view out of range");
  const IdRaster& ids = sample.ids[view];
  const DepthRaster& d_gt = sample.depths[view];
  const Camera& cam = sample.cameras[view];

  Fragment frag;
  frag.instance_id = instance_id;
  frag.alpha = alpha;
  frag.source_view = view;
  frag.mask = MaskRaster(ids.height, ids.width, 0);
  int visible = 0;
  for (size_t i = 0; i < ids.data.size(); ++i)
    if (ids.data[i] == instance_id) {
      frag.mask.data[i] = 1;
      ++visible;
    }
  if (visible < opt.min_pixels)
    SC_THROW(EmptyGeometryError, "instance " + std::to_string(instance_id) + " has " +
                                     std::to_string(visible) + " px in view " +
                                     std::to_string(view));

  DepthRaster d_est = perturb_depth(d_gt, rng, opt.severity);
  DepthRaster mixed = mix_depth(d_gt, d_est, alpha);
  frag.points = backproject_depth(mixed, frag.mask, cam);
  if (!sample.rgbs.empty()) {
    const RgbRaster& rgb = sample.rgbs[view];
    frag.points.colors.reserve(frag.points.size());
    for (int v = 0; v < frag.mask.height; ++v)
      for (int u = 0; u < frag.mask.width; ++u)
        if (frag.mask.at(v, u)) frag.points.colors.push_back(rgb.at(v, u));
  }
  return frag;
}

// Fraction of the grid's occupancy that faces the camera: a voxel counts as
// visible when its projected footprint covers some raster pixel whose depth,
// plus half a voxel pitch of slack, reaches the voxel's near face. Testing
// the footprint rather than the center keeps the inner layer of a voxelized
// shell from being misread as self-occluded.
inline double visibility_ratio_of_grid(const OccGrid& grid, const Camera& camera,
                                       const DepthRaster& depth) {
  double slack = grid.frame.voxel_pitch() * 0.5;
  int occupied = 0, seen = 0;
  for (int i = 0; i < grid.res(); ++i)
    for (int j = 0; j < grid.res(); ++j)
      for (int k = 0; k < grid.res(); ++k) {
        if (grid.occ(i, j, k) <= kOccupancyThreshold) continue;
        ++occupied;
        AABB vb = grid.frame.voxel_box(i, j, k);
        double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300, dmin = 1e300;
        bool in_front = false;
        for (int ci = 0; ci < 8; ++ci) {
          Vec3 corner{ci & 1 ? vb.max_corner.x : vb.min_corner.x,
                      ci & 2 ? vb.max_corner.y : vb.min_corner.y,
                      ci & 4 ? vb.max_corner.z : vb.min_corner.z};
          double u, v, d;
          if (!camera.project(camera.world_to_camera(corner), u, v, d)) continue;
          in_front = true;
          u0 = std::min(u0, u);
          u1 = std::max(u1, u);
          v0 = std::min(v0, v);
          v1 = std::max(v1, v);
          dmin = std::min(dmin, d);
        }
        if (!in_front) continue;
        bool visible = false;
        int py0 = std::max(0, int(v0)), py1 = std::min(depth.height - 1, int(v1));
        int px0 = std::max(0, int(u0)), px1 = std::min(depth.width - 1, int(u1));
        for (int py = py0; py <= py1 && !visible; ++py)
          for (int px = px0; px <= px1 && !visible; ++px) {
            double rd = depth.at(py, px);
            if (rd > 0 && dmin <= rd + slack) visible = true;
          }
        if (visible) ++seen;
      }
  return occupied > 0 ? double(seen) / occupied : 0.0;
}

inline double visibility_ratio(const InstanceRecord& instance, const Camera& camera,
                               const DepthRaster& depth, int resolution = 16) {
  auto vox = voxelize(instance.gt_surface, cube_frame_of(instance.gt_box, resolution));
  return visibility_ratio_of_grid(vox.grid, camera, depth);
}

}  // namespace scenecomp
