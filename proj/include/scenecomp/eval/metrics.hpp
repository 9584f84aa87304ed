#pragma once

#include <algorithm>
#include <optional>

#include "scenecomp/eval/nn_index.hpp"
#include "scenecomp/geom/ops.hpp"
#include "scenecomp/pipeline/complete.hpp"

namespace scenecomp {

enum class MetricNormalization { GtSceneUnitMaxSide, None };

struct MetricConfig {
  double tau = 0.1;               // F-Score threshold (relative after normalization)
  int samples_per_object = 8192;
  MetricNormalization normalization = MetricNormalization::GtSceneUnitMaxSide;

  void validate() const {
    SC_CHECK(tau > 0, "tau must be positive");
    SC_CHECK(samples_per_object >= 1, "need at least one sample per object");
  }
};

// Symmetric mean of non-squared Euclidean nearest-neighbor distances.
inline double chamfer(const PointCloud& a, const PointCloud& b, double cell_size = 0.1) {
  if (a.empty() || b.empty()) SC_THROW(EmptyGeometryError, "chamfer of an empty cloud");
  SpatialHashIndex ia(a, cell_size), ib(b, cell_size);
  double ab = 0, ba = 0;
  for (const auto& p : a.points) ab += ib.nearest_distance(p);
  for (const auto& p : b.points) ba += ia.nearest_distance(p);
  return 0.5 * (ab / a.size() + ba / b.size());
}

// F-Score at threshold tau, in percent: 200 P R / (P + R), 0 when P+R = 0.
inline double fscore(const PointCloud& a, const PointCloud& b, double tau) {
  if (a.empty() || b.empty()) SC_THROW(EmptyGeometryError, "fscore of an empty cloud");
  SC_CHECK(tau > 0, "tau must be positive");
  SpatialHashIndex ia(a, tau), ib(b, tau);
  size_t hit_a = 0, hit_b = 0;
  for (const auto& p : a.points)
    if (ib.within(p, tau)) ++hit_a;
  for (const auto& p : b.points)
    if (ia.within(p, tau)) ++hit_b;
  double precision = double(hit_a) / a.size();
  double recall = double(hit_b) / b.size();
  if (precision + recall == 0) return 0.0;
  return 200.0 * precision * recall / (precision + recall);
}

struct InstanceEval {
  uint16_t instance_id = 0;
  double cd = 0;
  double fs = 0;
  double bbox_iou = 0;
  bool used_fallback = false;
};

struct EvalReport {
  double cd_scene = 0;
  double fs_scene = 0;
  double cd_object = 0;   // mean over matched instances
  double fs_object = 0;
  double bbox_iou = 0;    // mean over matched instances
  std::vector<InstanceEval> per_instance;
  std::vector<uint16_t> missing;  // GT ids with no predicted asset
};

namespace detail {
// Deterministic subsample without replacement (seeded Fisher-Yates prefix).
inline PointCloud subsample(const PointCloud& pc, int count, uint64_t seed) {
  if (static_cast<int>(pc.size()) <= count) return pc;
  std::vector<int64_t> idx(pc.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  RngStream rng(seed);
  PointCloud out;
  out.points.reserve(count);
  for (int i = 0; i < count; ++i) {
    int64_t j = i + static_cast<int64_t>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
    out.points.push_back(pc.points[idx[i]]);
    if (pc.has_colors()) out.colors.push_back(pc.colors[idx[i]]);
  }
  return out;
}

inline PointCloud scaled(const PointCloud& pc, double s) {
  PointCloud out = pc;
  for (auto& p : out.points) p = p * s;
  return out;
}
}  // namespace detail

// Object-level metrics per matched instance id, scene-level metrics on the
// concatenated clouds, both after scaling the GT scene's union box to unit
// max side (predictions get the same transform). Box IoU is scale-invariant
// and computed on the raw boxes.
inline EvalReport evaluate_scene(const CompletedScene& pred, const SceneSample& gt,
                                 const MetricConfig& cfg) {
  cfg.validate();
  if (gt.instances.empty()) SC_THROW(EmptySceneError, "GT scene has no instances");

  AABB scene_box = gt.instances[0].gt_box;
  for (const auto& inst : gt.instances) scene_box = scene_box.merged(inst.gt_box);
  double s = 1.0;
  if (cfg.normalization == MetricNormalization::GtSceneUnitMaxSide) {
    SC_CHECK(scene_box.max_side() > 0, "degenerate GT scene box");
    s = 1.0 / scene_box.max_side();
  }

  EvalReport report;
  PointCloud pred_all, gt_all;
  size_t matched = 0;
  for (const auto& inst : gt.instances) {
    const CompletedAsset* asset = nullptr;
    for (const auto& a : pred.assets)
      if (a.instance_id == inst.instance_id) asset = &a;
    PointCloud gt_cloud = detail::subsample(inst.gt_surface, cfg.samples_per_object,
                                            gt.seed * 1000 + inst.instance_id);
    PointCloud gt_scaled = detail::scaled(gt_cloud, s);
    gt_all.points.insert(gt_all.points.end(), gt_scaled.points.begin(),
                         gt_scaled.points.end());
    if (!asset || asset->world_points.empty()) {
      report.missing.push_back(inst.instance_id);
      continue;
    }
    ++matched;
    PointCloud pred_cloud = detail::subsample(asset->world_points, cfg.samples_per_object,
                                              gt.seed * 1000 + inst.instance_id);
    PointCloud pred_scaled = detail::scaled(pred_cloud, s);
    pred_all.points.insert(pred_all.points.end(), pred_scaled.points.begin(),
                           pred_scaled.points.end());

    InstanceEval ie;
    ie.instance_id = inst.instance_id;
    ie.cd = chamfer(pred_scaled, gt_scaled, cfg.tau);
    ie.fs = fscore(pred_scaled, gt_scaled, cfg.tau);
    ie.bbox_iou = aabb_iou(compute_aabb(asset->world_points), inst.gt_box);
    ie.used_fallback = asset->used_fallback;
    report.per_instance.push_back(ie);
    report.cd_object += ie.cd;
    report.fs_object += ie.fs;
    report.bbox_iou += ie.bbox_iou;
  }
  if (matched == 0) SC_THROW(EmptySceneError, "no predicted instance matches the GT");
  report.cd_object /= matched;
  report.fs_object /= matched;
  report.bbox_iou /= matched;
  report.cd_scene = chamfer(pred_all, gt_all, cfg.tau);
  report.fs_scene = fscore(pred_all, gt_all, cfg.tau);
  return report;
}

// Evaluates the GT against itself; the fixed point (cd 0, fs 100, iou 1).
inline CompletedScene identity_prediction(const SceneSample& gt) {
  CompletedScene pred;
  for (const auto& inst : gt.instances) {
    CompletedAsset a;
    a.instance_id = inst.instance_id;
    a.world_points = inst.gt_surface;
    a.b_vis = inst.gt_box;
    a.b_exp = expand_bound(inst.gt_box);
    a.b_full = inst.gt_box;
    pred.assets.push_back(std::move(a));
  }
  return pred;
}

}  // namespace scenecomp
