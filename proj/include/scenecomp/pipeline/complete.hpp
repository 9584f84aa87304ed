#pragma once

#include <chrono>

#include "scenecomp/flow/sampler.hpp"
#include "scenecomp/pipeline/train_data.hpp"

namespace scenecomp {

struct StageModels {
  const DualBranchModel<double>* coarse = nullptr;
  const DualBranchModel<double>* fine = nullptr;
  const DualBranchModel<double>* texture = nullptr;  // optional
};

struct CompleteOptions {
  SampleOptions sampling;          // steps 25, cfg 5 by default
  double mix_alpha = 1.0;          // depth mixing: 1 = pure estimated depth
  double embed_alpha = 1.0;        // depth-ratio embedding fed to the model
  double severity = 0.1;           // estimator surrogate strength
  int min_pixels = kMinVisiblePixels;
  double threshold = kOccupancyThreshold;
  double expand_factor = 4.0;
  double fallback_scale = 1.2;     // b_vis blow-up when the coarse stage is empty
  bool with_texture = true;
};

struct StageTimings {
  double coarse_ms = 0, fine_ms = 0, texture_ms = 0;
};

struct CompletedAsset {
  uint16_t instance_id = 0;
  OccGrid fine_grid;        // carries rgb after texturing
  AABB b_vis, b_exp, b_full;
  PointCloud world_points;  // denormalized voxel centers, colored if textured
  bool used_fallback = false;
  StageTimings timings;
};

struct CompletedScene {
  std::vector<CompletedAsset> assets;
  PointCloud background;  // backprojected floor/wall pixels
};

namespace detail {
inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}
}  // namespace detail

// Coarse stage: generate inside the conservative expansion of the visible
// box, then read the full-object boundary off the thresholded occupancy.
// An empty generation falls back to b_vis scaled about its center.
inline std::tuple<OccGrid, AABB, bool> coarse_complete(const SceneSample& scene,
                                                       const Fragment& fragment,
                                                       const StageModels& models,
                                                       const CompleteOptions& opt,
                                                       RngStream& rng) {
  SC_CHECK(models.coarse != nullptr, "coarse model missing");
  if (fragment.points.empty()) SC_THROW(EmptyGeometryError, "empty fragment");
  const ModelConfig& cfg = models.coarse->config();
  AABB b_vis = compute_aabb(fragment.points);
  CubeFrame frame{expand_bound(b_vis, opt.expand_factor), cfg.grid_res()};
  BuildConditionOptions bopt;
  bopt.crop_size = cfg.crop_size;
  ConditionBundle bundle = build_condition(scene, fragment, Stage::Coarse, frame,
                                           models.coarse->encoders(), opt.embed_alpha, 0.0, bopt);
  nn::Tensor<double> z = sample(*models.coarse, bundle, opt.sampling, rng);
  OccGrid grid = latent_to_occupancy(z, frame);
  AABB b_full;
  bool fallback = false;
  try {
    b_full = tight_box_of_grid(grid, opt.threshold);
  } catch (const EmptyGeometryError&) {
    fallback = true;
    double side = std::max(b_vis.max_side(), kDegenerateBoxSide) * opt.fallback_scale;
    Vec3 h{side * 0.5, side * 0.5, side * 0.5};
    b_full = AABB{b_vis.center() - h, b_vis.center() + h};
  }
  return {std::move(grid), b_full, fallback};
}

// Fine stage: regenerate at full resolution inside the cubified boundary.
inline OccGrid fine_refine(const SceneSample& scene, const Fragment& fragment,
                           const AABB& b_full, const StageModels& models,
                           const CompleteOptions& opt, RngStream& rng) {
  SC_CHECK(models.fine != nullptr, "fine model missing");
  SC_CHECK(b_full.valid() && b_full.max_side() > 0, "b_full must have positive extent");
  const ModelConfig& cfg = models.fine->config();
  CubeFrame frame = cube_frame_of(b_full, cfg.grid_res());
  BuildConditionOptions bopt;
  bopt.crop_size = cfg.crop_size;
  ConditionBundle bundle = build_condition(scene, fragment, Stage::Fine, frame,
                                           models.fine->encoders(), opt.embed_alpha, 0.0, bopt);
  nn::Tensor<double> z = sample(*models.fine, bundle, opt.sampling, rng);
  return latent_to_occupancy(z, frame);
}

// Texture stage: per-voxel RGB over the fixed occupancy, conditioned on the
// projected view colors and the visibility-ratio embedding.
inline OccGrid texture_asset(const SceneSample& scene, const Fragment& fragment,
                             const OccGrid& fine_grid, const StageModels& models,
                             const CompleteOptions& opt, RngStream& rng) {
  SC_CHECK(models.texture != nullptr, "texture model missing");
  if (fine_grid.count_above(opt.threshold) == 0)
    SC_THROW(EmptyGeometryError, "texture stage needs occupied voxels");
  const ModelConfig& cfg = models.texture->config();
  SC_CHECK(fine_grid.res() == cfg.grid_res(), "texture stage resolution mismatch");
  double vis = visibility_ratio_of_grid(fine_grid, scene.cameras[fragment.source_view],
                                        scene.depths[fragment.source_view]);
  BuildConditionOptions bopt;
  bopt.crop_size = cfg.crop_size;
  ConditionBundle bundle = build_condition(scene, fragment, Stage::Texture, fine_grid.frame,
                                           models.texture->encoders(), opt.embed_alpha, vis, bopt);
  OccGrid canvas = fine_grid;
  canvas.rgb.clear();
  for (auto& v : canvas.occupancy) v = v > opt.threshold ? 1.0 : 0.0;
  bundle.base_occupancy = canvas;
  nn::Tensor<double> z = sample(*models.texture, bundle, opt.sampling, rng);
  OccGrid out = fine_grid;
  latent_to_rgb(z, out);
  return out;
}

// Completes one visible instance end to end.
inline CompletedAsset complete_instance(const SceneSample& scene, const Fragment& fragment,
                                        const StageModels& models, const CompleteOptions& opt,
                                        RngStream& rng) {
  CompletedAsset asset;
  asset.instance_id = fragment.instance_id;
  asset.b_vis = compute_aabb(fragment.points);
  asset.b_exp = expand_bound(asset.b_vis, opt.expand_factor);

  double t0 = detail::now_ms();
  RngStream coarse_rng = rng.child("coarse");
  auto [coarse_grid, b_full, fallback] =
      coarse_complete(scene, fragment, models, opt, coarse_rng);
  asset.b_full = b_full;
  asset.used_fallback = fallback;
  asset.timings.coarse_ms = detail::now_ms() - t0;

  t0 = detail::now_ms();
  RngStream fine_rng = rng.child("fine");
  asset.fine_grid = fine_refine(scene, fragment, b_full, models, opt, fine_rng);
  asset.timings.fine_ms = detail::now_ms() - t0;

  if (opt.with_texture && models.texture != nullptr &&
      asset.fine_grid.count_above(opt.threshold) > 0) {
    t0 = detail::now_ms();
    RngStream tex_rng = rng.child("texture");
    asset.fine_grid = texture_asset(scene, fragment, asset.fine_grid, models, opt, tex_rng);
    asset.timings.texture_ms = detail::now_ms() - t0;
  }
  asset.world_points = grid_to_pointcloud(asset.fine_grid, opt.threshold);
  return asset;
}

// In-place completion of every visible instance in one view. Per-instance
// rng streams are derived from (seed, instance id), so results are identical
// whether instances run sequentially or concurrently, and completing a
// subset yields bit-identical assets for that subset. No pose fitting
// happens anywhere: assembly is pure denormalization through stage frames.
inline CompletedScene complete_scene(const SceneSample& scene, int view,
                                     const StageModels& models, const CompleteOptions& opt,
                                     RngStream& rng) {
  SC_CHECK(view >= 0 && view < static_cast<int>(scene.ids.size()), "view out of range");
  CompletedScene out;
  std::vector<uint16_t> visible;
  for (const auto& inst : scene.instances) {
    int c = 0;
    for (uint16_t px : scene.ids[view].data)
      if (px == inst.instance_id) ++c;
    if (c >= opt.min_pixels) visible.push_back(inst.instance_id);
  }
  if (visible.empty()) SC_THROW(EmptySceneError, "no instance visible in the view");

  FragmentOptions fopt;
  fopt.severity = opt.severity;
  fopt.min_pixels = opt.min_pixels;
  for (uint16_t id : visible) {
    RngStream inst_rng = rng.child("instance", id);
    RngStream frag_rng = inst_rng.child("depth");
    Fragment frag = extract_fragment(scene, view, id, opt.mix_alpha, frag_rng, fopt);
    out.assets.push_back(complete_instance(scene, frag, models, opt, inst_rng));
  }

  // Background: floor/wall pixels kept as an untextured cloud.
  MaskRaster bg(scene.ids[view].height, scene.ids[view].width, 0);
  for (size_t i = 0; i < bg.data.size(); ++i)
    bg.data[i] = scene.ids[view].data[i] == 0 && scene.depths[view].data[i] > 0 ? 1 : 0;
  out.background = backproject_depth(scene.depths[view], bg, scene.cameras[view]);
  return out;
}

}  // namespace scenecomp
