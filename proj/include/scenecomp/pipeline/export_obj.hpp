#pragma once

#include <cstdio>

#include "scenecomp/io.hpp"
#include "scenecomp/pipeline/complete.hpp"

namespace scenecomp {

namespace detail {
inline void append_voxel_cube(std::string& out, const AABB& box, const Rgb& color,
                              int64_t& vertex_base) {
  char line[160];
  for (int i = 0; i < 8; ++i) {
    Vec3 p{i & 1 ? box.max_corner.x : box.min_corner.x,
           i & 2 ? box.max_corner.y : box.min_corner.y,
           i & 4 ? box.max_corner.z : box.min_corner.z};
    std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f %.4f %.4f %.4f\n", p.x, p.y, p.z,
                  color.r, color.g, color.b);
    out += line;
  }
  static const int faces[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                  {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (auto& f : faces) {
    std::snprintf(line, sizeof(line), "f %lld %lld %lld\nf %lld %lld %lld\n",
                  (long long)(vertex_base + f[0]), (long long)(vertex_base + f[1]),
                  (long long)(vertex_base + f[2]), (long long)(vertex_base + f[0]),
                  (long long)(vertex_base + f[2]), (long long)(vertex_base + f[3]));
    out += line;
  }
  vertex_base += 8;
}
}  // namespace detail

// Colored-voxel OBJ with the per-vertex color extension ("v x y z r g b").
// Each occupied voxel becomes a cube (8 vertices, 12 triangles); objects are
// grouped by instance id. Output bytes are deterministic.
inline void export_scene(const CompletedScene& scene, const std::filesystem::path& path,
                         double threshold = kOccupancyThreshold) {
  if (scene.assets.empty()) SC_THROW(EmptySceneError, "nothing to export");
  std::string out = "# colored voxel export\n";
  int64_t vertex_base = 1;
  for (const auto& asset : scene.assets) {
    out += "o instance_" + std::to_string(asset.instance_id) + "\n";
    const OccGrid& g = asset.fine_grid;
    for (int i = 0; i < g.res(); ++i)
      for (int j = 0; j < g.res(); ++j)
        for (int k = 0; k < g.res(); ++k) {
          if (g.occ(i, j, k) <= threshold) continue;
          Rgb c = g.has_rgb() ? g.rgb_at(i, j, k) : Rgb{0.7, 0.7, 0.7};
          detail::append_voxel_cube(out, g.frame.voxel_box(i, j, k), c, vertex_base);
        }
  }
  io::write_file(path, out);
}

}  // namespace scenecomp
