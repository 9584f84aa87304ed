#pragma once

#include <optional>
#include <vector>

#include "scenecomp/geom/types.hpp"

namespace scenecomp {

// Dense voxel occupancy (values in [0,1]) inside a CubeFrame, with optional
// per-voxel RGB. Indexing is (i, j, k) = (x, y, z) row-major with k fastest.
struct OccGrid {
  CubeFrame frame;
  std::vector<double> occupancy;     // R^3 values in [0,1]
  std::vector<double> rgb;           // empty or R^3 * 3

  OccGrid() = default;
  explicit OccGrid(const CubeFrame& f)
      : frame(f), occupancy(size_t(f.resolution) * f.resolution * f.resolution, 0.0) {}

  int res() const { return frame.resolution; }
  size_t cells() const { return occupancy.size(); }
  size_t index(int i, int j, int k) const {
    return (size_t(i) * res() + j) * res() + k;
  }
  double& occ(int i, int j, int k) { return occupancy[index(i, j, k)]; }
  double occ(int i, int j, int k) const { return occupancy[index(i, j, k)]; }

  bool has_rgb() const { return !rgb.empty(); }
  void allocate_rgb() { rgb.assign(cells() * 3, 0.0); }
  void set_rgb(int i, int j, int k, const Rgb& c) {
    size_t b = index(i, j, k) * 3;
    rgb[b] = c.r; rgb[b + 1] = c.g; rgb[b + 2] = c.b;
  }
  Rgb rgb_at(int i, int j, int k) const {
    size_t b = index(i, j, k) * 3;
    return {rgb[b], rgb[b + 1], rgb[b + 2]};
  }

  size_t count_above(double threshold) const {
    size_t n = 0;
    for (double v : occupancy)
      if (v > threshold) ++n;
    return n;
  }

  void validate() const {
    frame.validate();
    SC_CHECK(occupancy.size() == size_t(res()) * res() * res(),
             "occupancy shape must match frame resolution");
    SC_CHECK(rgb.empty() || rgb.size() == occupancy.size() * 3, "rgb shape mismatch");
    for (double v : occupancy) SC_CHECK(v >= 0.0 && v <= 1.0, "occupancy outside [0,1]");
  }
};

struct VoxelizeResult {
  OccGrid grid;
  size_t dropped = 0;  // points outside the frame cube
};

namespace detail {
// Half-open cells [lo, hi) except the last cell per axis, which is closed.
inline int cell_of(double unit_coord, int res, bool& outside) {
  double s = (unit_coord + 0.5) * res;
  if (s < 0.0) { outside = true; return 0; }
  if (s >= res) {
    // The +0.5 face belongs to the last cell.
    if (s <= res) { outside = false; return res - 1; }
    outside = true;
    return res - 1;
  }
  outside = false;
  return static_cast<int>(s);
}
}  // namespace detail

inline VoxelizeResult voxelize(const PointCloud& pc, const CubeFrame& frame) {
  frame.validate();
  VoxelizeResult out;
  out.grid = OccGrid(frame);
  const int r = frame.resolution;
  bool want_rgb = pc.has_colors();
  std::vector<double> accum;   // rgb sums
  std::vector<uint32_t> hits;  // per-cell point counts, for rgb averaging
  if (want_rgb) {
    accum.assign(out.grid.cells() * 3, 0.0);
    hits.assign(out.grid.cells(), 0);
  }
  for (size_t n = 0; n < pc.points.size(); ++n) {
    Vec3 u = frame.world_to_unit(pc.points[n]);
    bool ox, oy, oz;
    int i = detail::cell_of(u.x, r, ox);
    int j = detail::cell_of(u.y, r, oy);
    int k = detail::cell_of(u.z, r, oz);
    if (ox || oy || oz) {
      ++out.dropped;
      continue;
    }
    size_t idx = out.grid.index(i, j, k);
    out.grid.occupancy[idx] = 1.0;
    if (want_rgb) {
      accum[idx * 3] += pc.colors[n].r;
      accum[idx * 3 + 1] += pc.colors[n].g;
      accum[idx * 3 + 2] += pc.colors[n].b;
      hits[idx]++;
    }
  }
  if (want_rgb) {
    out.grid.allocate_rgb();
    for (size_t idx = 0; idx < hits.size(); ++idx) {
      if (hits[idx] > 0) {
        out.grid.rgb[idx * 3] = accum[idx * 3] / hits[idx];
        out.grid.rgb[idx * 3 + 1] = accum[idx * 3 + 1] / hits[idx];
        out.grid.rgb[idx * 3 + 2] = accum[idx * 3 + 2] / hits[idx];
      }
    }
  }
  return out;
}

// Emits one point per voxel with occupancy > threshold at its world center,
// carrying rgb when present.
inline PointCloud grid_to_pointcloud(const OccGrid& grid, double threshold = 0.5) {
  SC_CHECK(threshold > 0.0 && threshold < 1.0, "threshold must be in (0,1)");
  PointCloud pc;
  const int r = grid.res();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j)
      for (int k = 0; k < r; ++k) {
        if (grid.occ(i, j, k) > threshold) {
          pc.points.push_back(grid.frame.voxel_center(i, j, k));
          if (grid.has_rgb()) pc.colors.push_back(grid.rgb_at(i, j, k));
        }
      }
  return pc;
}

// World AABB spanning the outer faces of all voxels above threshold.
inline AABB tight_box_of_grid(const OccGrid& grid, double threshold = 0.5) {
  const int r = grid.res();
  int lo[3] = {r, r, r}, hi[3] = {-1, -1, -1};
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j)
      for (int k = 0; k < r; ++k) {
        if (grid.occ(i, j, k) > threshold) {
          int idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], idx[a]);
            hi[a] = std::max(hi[a], idx[a]);
          }
        }
      }
  if (hi[0] < 0) SC_THROW(EmptyGeometryError, "no voxel above threshold");
  double pitch = grid.frame.voxel_pitch();
  Vec3 mn = grid.frame.world_box.min_corner;
  AABB out{mn + Vec3{lo[0] * pitch, lo[1] * pitch, lo[2] * pitch},
           mn + Vec3{(hi[0] + 1) * pitch, (hi[1] + 1) * pitch, (hi[2] + 1) * pitch}};
  // Boundary cells snap to the frame box so the result is contained in it
  // bit-exactly, not just up to rounding.
  for (int a = 0; a < 3; ++a) {
    if (lo[a] == 0) out.min_corner[a] = grid.frame.world_box.min_corner[a];
    if (hi[a] == r - 1) out.max_corner[a] = grid.frame.world_box.max_corner[a];
  }
  return out;
}

}  // namespace scenecomp
