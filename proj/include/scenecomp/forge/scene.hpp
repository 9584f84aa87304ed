#pragma once

#include <optional>
#include <vector>

#include "scenecomp/forge/raster.hpp"
#include "scenecomp/geom/ops.hpp"

namespace scenecomp {

struct ForgeConfig {
  // Square footprint; the side is drawn per scene so crowding (and with it
  // the surviving instance count and occlusion level) varies across scenes.
  double arena_side_lo = 1.2;
  double arena_side_hi = 2.8;
  double arena_height = 3.0;
  int candidates = 20;              // assets drawn per scene
  int min_instances = 5;
  int max_instances = 20;
  int max_place_attempts = 100;
  double scale_lo = 0.5, scale_hi = 2.0;
  double stack_prob = 0.15;         // chance to rest on a placed instance
  int max_walls = 4;
  double wall_height_lo = 0.7, wall_height_hi = 1.5;
  int cameras = 4;
  int raster_size = 128;
  double fov_deg = 35.0;
  double cam_radius_lo = 0.7, cam_radius_hi = 1.1;   // x arena diagonal
  double cam_elev_lo_deg = 15.0, cam_elev_hi_deg = 70.0;
  int camera_attempts = 10;
  int surface_samples = 8192;
  int min_pixels = 16;
  bool with_rgb = true;

  void validate() const {
    SC_CHECK(arena_side_lo > 0 && arena_side_hi >= arena_side_lo && arena_height > 0,
             "arena must have positive size");
    SC_CHECK(min_instances >= 1 && max_instances >= min_instances &&
                 candidates >= min_instances,
             "instance counts inconsistent");
    SC_CHECK(cameras >= 1 && raster_size >= 16, "need at least one camera and 16px rasters");
    SC_CHECK(surface_samples >= 1, "surface samples must be positive");
    SC_CHECK(max_walls >= 0 && max_walls <= 4, "wall count range is 0..4");
  }
};

struct InstanceRecord {
  uint16_t instance_id = 0;  // positive; 0 is reserved for background
  Primitive primitive;
  double scale = 1.0;
  double z_rotation = 0.0;
  Vec3 translation;
  PointCloud gt_surface;  // world space, f32-quantized
  AABB gt_box;            // compute_aabb(gt_surface)

  InstancePose pose() const { return {scale, z_rotation, translation}; }
};

struct SceneSample {
  uint64_t scene_id = 0;
  uint64_t seed = 0;
  AABB floor;                 // thin slab under the arena
  std::vector<AABB> walls;    // 0..4 thin slabs at arena edges
  std::vector<InstanceRecord> instances;
  std::vector<Camera> cameras;
  std::vector<DepthRaster> depths;   // one per camera
  std::vector<IdRaster> ids;
  std::vector<RgbRaster> rgbs;       // empty when rgb disabled

  const InstanceRecord* find_instance(uint16_t id) const {
    for (const auto& inst : instances)
      if (inst.instance_id == id) return &inst;
    return nullptr;
  }
};

struct Placement {
  double scale = 1.0;
  double z_rotation = 0.0;
  Vec3 translation;
  AABB world_box;
  int attempts_used = 0;
};

struct Rejected {
  int attempts_used = 0;
};

namespace detail {
inline bool boxes_overlap(const AABB& a, const AABB& b) {
  return a.min_corner.x < b.max_corner.x && b.min_corner.x < a.max_corner.x &&
         a.min_corner.y < b.max_corner.y && b.min_corner.y < a.max_corner.y &&
         a.min_corner.z < b.max_corner.z && b.min_corner.z < a.max_corner.z;
}
}  // namespace detail

// Sequential placement with rejection: per attempt draw scale and z-rotation,
// pick a resting surface (floor, or occasionally the top of a placed box),
// then test the world AABB against the arena and all placed boxes.
inline std::variant<Placement, Rejected> try_place(const Primitive& prim,
                                                   const std::vector<AABB>& placed,
                                                   const AABB& arena, RngStream& rng,
                                                   const ForgeConfig& cfg) {
  SC_CHECK(arena.volume() > 0, "arena must have positive volume");
  for (int attempt = 1; attempt <= cfg.max_place_attempts; ++attempt) {
    double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    double rot = rng.uniform(0, 2 * 3.14159265358979323846);
    InstancePose origin_pose{scale, rot, {0, 0, 0}};
    AABB local = primitive_world_aabb(prim, origin_pose);

    double base_z = 0.0;
    bool stacked = rng.uniform() < cfg.stack_prob && !placed.empty();
    const AABB* support = nullptr;
    if (stacked) {
      support = &placed[rng.uniform_index(placed.size())];
      Vec3 se = support->extent();
      // Needs head room and a footprint that fits on the support top.
      if (se.x < local.extent().x || se.y < local.extent().y) {
        support = nullptr;
      } else {
        base_z = support->max_corner.z;
      }
    }

    Vec3 half = local.extent() * 0.5;
    double x_lo = (support ? support->min_corner.x : arena.min_corner.x) + half.x;
    double x_hi = (support ? support->max_corner.x : arena.max_corner.x) - half.x;
    double y_lo = (support ? support->min_corner.y : arena.min_corner.y) + half.y;
    double y_hi = (support ? support->max_corner.y : arena.max_corner.y) - half.y;
    if (x_lo > x_hi || y_lo > y_hi) continue;
    Vec3 t{rng.uniform(x_lo, x_hi) - local.center().x,
           rng.uniform(y_lo, y_hi) - local.center().y, base_z - local.min_corner.z};
    AABB world = local.translated(t);
    if (!arena.contains(world)) continue;
    bool collides = false;
    for (const auto& other : placed)
      if (detail::boxes_overlap(world, other)) {
        collides = true;
        break;
      }
    if (collides) continue;
    return Placement{scale, rot, t, world, attempt};
  }
  return Rejected{cfg.max_place_attempts};
}

// All world triangles of a scene: floor, walls, instances.
inline std::vector<Triangle> scene_triangles(const SceneSample& scene) {
  std::vector<Triangle> tris;
  InstancePose identity;
  auto add_box = [&](const AABB& box, uint16_t id, const Rgb& col) {
    detail::tessellate_box(tris, BoxPart{box.min_corner, box.max_corner}, identity, id, col);
  };
  add_box(scene.floor, 0, Rgb{0.62, 0.6, 0.58});
  for (size_t i = 0; i < scene.walls.size(); ++i)
    add_box(scene.walls[i], 0, Rgb{0.82, 0.8, 0.76});
  for (const auto& inst : scene.instances)
    tessellate_primitive(tris, inst.primitive, inst.pose(), inst.instance_id);
  return tris;
}

inline RasterOutput rasterize(const SceneSample& scene, const Camera& camera) {
  return rasterize_triangles(scene_triangles(scene), camera);
}

namespace detail {
inline Camera sample_camera(const ForgeConfig& cfg, double arena_side, RngStream& rng) {
  double diag = arena_side * std::sqrt(2.0);
  double radius = rng.uniform(cfg.cam_radius_lo, cfg.cam_radius_hi) * diag;
  double pi = 3.14159265358979323846;
  double azim = rng.uniform(0, 2 * pi);
  double elev = rng.uniform(cfg.cam_elev_lo_deg, cfg.cam_elev_hi_deg) * pi / 180.0;
  Vec3 target{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.3 + rng.uniform(-0.1, 0.1)};
  Vec3 eye = target + Vec3{radius * std::cos(azim) * std::cos(elev),
                           radius * std::sin(azim) * std::cos(elev), radius * std::sin(elev)};
  Vec3 zc = (target - eye).normalized();
  Vec3 xc = zc.cross(Vec3{0, 0, 1}).normalized();
  Vec3 yc = zc.cross(xc);
  Camera cam;
  cam.width = cfg.raster_size;
  cam.height = cfg.raster_size;
  double f = (cfg.raster_size / 2.0) / std::tan(cfg.fov_deg * pi / 360.0);
  cam.intrinsics = Mat3{};
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = cfg.raster_size / 2.0;
  cam.intrinsics(1, 2) = cfg.raster_size / 2.0;
  Mat3 rot;
  for (int j = 0; j < 3; ++j) {
    rot(0, j) = xc[j];
    rot(1, j) = yc[j];
    rot(2, j) = zc[j];
  }
  cam.world_to_cam = {rot, rot * eye * -1.0};
  return cam;
}
}  // namespace detail

// Deterministic in (config, seed). Draws `candidates` assets, places them
// sequentially, keeps the collision-free subset, then samples cameras until
// every accepted instance is visible with at least min_pixels pixels.
inline SceneSample forge_scene(const ForgeConfig& cfg, uint64_t seed) {
  cfg.validate();
  RngStream root(seed);
  SceneSample scene;
  scene.scene_id = seed;
  scene.seed = seed;

  RngStream arena_rng = root.child("arena");
  double arena_side = arena_rng.uniform(cfg.arena_side_lo, cfg.arena_side_hi);
  double hs = arena_side / 2;
  AABB arena{{-hs, -hs, 0}, {hs, hs, cfg.arena_height}};
  double margin = arena_side;  // floor extends past the arena
  scene.floor = AABB{{-hs - margin, -hs - margin, -0.05}, {hs + margin, hs + margin, 0.0}};

  RngStream walls_rng = root.child("walls");
  int nwalls = walls_rng.uniform_int(0, cfg.max_walls);
  std::vector<int> edges = {0, 1, 2, 3};
  for (int i = 0; i < nwalls; ++i) {
    int pick = static_cast<int>(walls_rng.uniform_index(edges.size()));
    int edge = edges[pick];
    edges.erase(edges.begin() + pick);
    double h = walls_rng.uniform(cfg.wall_height_lo, cfg.wall_height_hi);
    double t = 0.05;
    switch (edge) {
      case 0: scene.walls.push_back({{-hs - t, -hs - t, 0}, {hs + t, -hs, h}}); break;
      case 1: scene.walls.push_back({{-hs - t, hs, 0}, {hs + t, hs + t, h}}); break;
      case 2: scene.walls.push_back({{-hs - t, -hs - t, 0}, {-hs, hs + t, h}}); break;
      case 3: scene.walls.push_back({{hs, -hs - t, 0}, {hs + t, hs + t, h}}); break;
    }
  }

  RngStream prim_rng = root.child("prims");
  RngStream place_rng = root.child("place");
  std::vector<AABB> placed_boxes;
  uint16_t next_id = 1;
  int limit = std::min(cfg.candidates, cfg.max_instances);
  for (int c = 0; c < cfg.candidates && static_cast<int>(scene.instances.size()) < limit;
       ++c) {
    Primitive prim = sample_primitive(prim_rng);
    auto placed = try_place(prim, placed_boxes, arena, place_rng, cfg);
    if (std::holds_alternative<Rejected>(placed)) continue;
    const auto& pl = std::get<Placement>(placed);
    InstanceRecord inst;
    inst.instance_id = next_id++;
    inst.primitive = prim;
    inst.scale = pl.scale;
    inst.z_rotation = pl.z_rotation;
    inst.translation = pl.translation;
    RngStream surf_rng = root.child("surface", inst.instance_id);
    inst.gt_surface =
        sample_primitive_surface(prim, inst.pose(), cfg.surface_samples, surf_rng);
    inst.gt_box = compute_aabb(inst.gt_surface);
    placed_boxes.push_back(pl.world_box);
    scene.instances.push_back(std::move(inst));
  }
  if (static_cast<int>(scene.instances.size()) < cfg.min_instances)
    SC_THROW(ForgeFailure, "placed " + std::to_string(scene.instances.size()) + " of " +
                               std::to_string(cfg.min_instances) + " required instances");

  RngStream cam_rng = root.child("cams");
  auto render_views = [&](std::vector<Camera>& cams) {
    std::vector<Triangle> tris = scene_triangles(scene);
    scene.cameras = cams;
    scene.depths.clear();
    scene.ids.clear();
    scene.rgbs.clear();
    for (const Camera& cam : cams) {
      RasterOutput ro = rasterize_triangles(tris, cam);
      scene.depths.push_back(std::move(ro.depth));
      scene.ids.push_back(std::move(ro.ids));
      if (cfg.with_rgb) scene.rgbs.push_back(std::move(ro.rgb));
    }
  };
  auto max_pixels = [&](const InstanceRecord& inst) {
    int best = 0;
    for (const auto& idr : scene.ids) {
      int c = 0;
      for (uint16_t px : idr.data)
        if (px == inst.instance_id) ++c;
      best = std::max(best, c);
    }
    return best;
  };

  for (int attempt = 0; attempt < cfg.camera_attempts; ++attempt) {
    std::vector<Camera> cams;
    for (int v = 0; v < cfg.cameras; ++v)
      cams.push_back(detail::sample_camera(cfg, arena_side, cam_rng));
    render_views(cams);
    bool all_visible = true;
    for (const auto& inst : scene.instances)
      if (max_pixels(inst) < cfg.min_pixels) {
        all_visible = false;
        break;
      }
    if (all_visible) return scene;
    if (attempt + 1 == cfg.camera_attempts) {
      // Deeply buried instances stay invisible under every camera set.
      // Keep the visible subset, consistent with sampling candidates and
      // retaining what survives; re-render without the dropped geometry.
      std::vector<InstanceRecord> kept;
      for (auto& inst : scene.instances)
        if (max_pixels(inst) >= cfg.min_pixels) kept.push_back(std::move(inst));
      if (static_cast<int>(kept.size()) < cfg.min_instances)
        SC_THROW(ForgeFailure, "only " + std::to_string(kept.size()) +
                                   " instances stayed visible above min_pixels");
      scene.instances = std::move(kept);
      render_views(cams);
      for (const auto& inst : scene.instances)
        if (max_pixels(inst) < cfg.min_pixels)
          SC_THROW(ForgeFailure, "visibility regressed after dropping buried instances");
      return scene;
    }
  }
  SC_THROW(ForgeFailure, "unreachable");
}

struct OcclusionRecord {
  uint16_t instance_id = 0;
  int view = 0;
  int visible_pixels = 0;
  int projected_pixels = 0;   // solo pass, occluders removed
  double fraction = 0.0;
  int components = 0;         // 8-connected components of the visible mask
};

// Two-pass union-find labeling of the visible mask with 8-connectivity.
inline int count_components_8(const MaskRaster& mask) {
  std::vector<int> parent;
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  Raster<int> labels(mask.height, mask.width, -1);
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(v, u)) continue;
      int lbl = -1;
      static const int dv[4] = {-1, -1, -1, 0};
      static const int du[4] = {-1, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int nv = v + dv[k], nu = u + du[k];
        if (!mask.inside(nv, nu) || labels.at(nv, nu) < 0) continue;
        if (lbl < 0)
          lbl = find(labels.at(nv, nu));
        else
          unite(lbl, labels.at(nv, nu));
      }
      if (lbl < 0) {
        lbl = static_cast<int>(parent.size());
        parent.push_back(lbl);
      }
      labels.at(v, u) = lbl;
    }
  }
  std::vector<int> roots;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u)
      if (labels.at(v, u) >= 0) {
        int r = find(labels.at(v, u));
        if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
      }
  return static_cast<int>(roots.size());
}

inline std::vector<OcclusionRecord> occlusion_stats(const SceneSample& scene) {
  SC_CHECK(!scene.ids.empty(), "rasters missing");
  std::vector<OcclusionRecord> out;
  for (const auto& inst : scene.instances) {
    std::vector<Triangle> solo;
    tessellate_primitive(solo, inst.primitive, inst.pose(), inst.instance_id);
    for (size_t v = 0; v < scene.ids.size(); ++v) {
      OcclusionRecord rec;
      rec.instance_id = inst.instance_id;
      rec.view = static_cast<int>(v);
      const IdRaster& idr = scene.ids[v];
      MaskRaster visible(idr.height, idr.width, 0);
      for (size_t i = 0; i < idr.data.size(); ++i)
        if (idr.data[i] == inst.instance_id) {
          visible.data[i] = 1;
          rec.visible_pixels++;
        }
      RasterOutput solo_out = rasterize_triangles(solo, scene.cameras[v]);
      for (uint16_t px : solo_out.ids.data)
        if (px == inst.instance_id) rec.projected_pixels++;
      rec.fraction =
          rec.projected_pixels > 0 ? double(rec.visible_pixels) / rec.projected_pixels : 0.0;
      rec.components = rec.visible_pixels > 0 ? count_components_8(visible) : 0;
      out.push_back(rec);
    }
  }
  return out;
}

}  // namespace scenecomp
