#pragma once

#include <optional>

#include "scenecomp/cond/embed.hpp"
#include "scenecomp/cond/encoders.hpp"
#include "scenecomp/cond/gafp.hpp"
#include "scenecomp/decomp/fragment.hpp"

namespace scenecomp {

enum class Stage { Coarse, Fine, Texture };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Coarse: return "coarse";
    case Stage::Fine: return "fine";
    case Stage::Texture: return "texture";
  }
  return "?";
}

inline Stage stage_from(const std::string& s) {
  if (s == "coarse") return Stage::Coarse;
  if (s == "fine") return Stage::Fine;
  if (s == "texture") return Stage::Texture;
  SC_THROW(LoadError, "unknown stage: " + s);
}

// Everything one denoising call is conditioned on. The encoded token
// sequences are the eval-time view; the raw crop/global images ride along so
// training can re-encode them inside the gradient graph.
struct ConditionBundle {
  OccGrid partial_grid;
  FeatureGrid gafp;
  RatioEmbedding depth_ratio;
  std::optional<RatioEmbedding> visibility;    // texture stage only
  std::optional<OccGrid> base_occupancy;       // texture stage canvas
  TokenSeq instance_tokens;
  TokenSeq global_tokens;
  bool null_flag = false;

  nn::Tensor<double> crop_image;    // (4, S, S)
  nn::Tensor<double> global_image;  // (2, S, S)

  void check_frames() const {
    SC_CHECK(partial_grid.frame.world_box.min_corner.x == gafp.frame.world_box.min_corner.x &&
                 partial_grid.frame.resolution == gafp.frame.resolution,
             "bundle grids must share one frame");
    if (base_occupancy)
      SC_CHECK(base_occupancy->frame.resolution == partial_grid.frame.resolution,
               "base occupancy frame mismatch");
  }
};

// The trainable encoders plus the frozen pixel featurizer used by GAFP.
template <class T>
struct CondEncoders {
  PatchEncoder<T>* instance = nullptr;  // owned by the model ("base" group)
  PatchEncoder<T>* global = nullptr;    // owned by the model ("control" group)
  const PixelFeaturizer* featurizer = nullptr;
};

struct BuildConditionOptions {
  bool null_request = false;
  int crop_size = 32;
};

// Assembles the bundle for one (fragment, stage, frame) triple. A null
// request produces the classifier-free null condition: zero grids, null
// flag set, and no encoded tokens (the model substitutes its learned null
// token parameters).
template <class T>
ConditionBundle build_condition(const SceneSample& scene, const Fragment& fragment,
                                Stage stage, const CubeFrame& frame,
                                const CondEncoders<T>& encoders, double alpha,
                                double visibility_value = 0.0,
                                const BuildConditionOptions& opt = {}) {
  ConditionBundle b;
  b.depth_ratio = RatioEmbedding::of(alpha);
  if (stage == Stage::Texture) b.visibility = RatioEmbedding::of(visibility_value);
  if (opt.null_request) {
    b.null_flag = true;
    b.partial_grid = OccGrid(frame);
    b.gafp = FeatureGrid(frame, kPixelFeatureChannels);
    b.crop_image = nn::Tensor<double>({4, opt.crop_size, opt.crop_size});
    b.global_image = nn::Tensor<double>({2, opt.crop_size, opt.crop_size});
    return b;
  }
  if (fragment.points.empty())
    SC_THROW(EmptyGeometryError, "cannot condition on an empty fragment");

  int view = fragment.source_view;
  const Camera& cam = scene.cameras[view];
  const RgbRaster* rgb = scene.rgbs.empty() ? nullptr : &scene.rgbs[view];

  b.partial_grid = voxelize(fragment.points, frame).grid;
  FeatureMap fm = encoders.featurizer->run(rgb, scene.depths[view], scene.ids[view]);
  b.gafp = gafp_project(fm, fragment.points, cam, frame).grid;

  b.crop_image = instance_crop(rgb, fragment.mask, opt.crop_size);
  b.global_image = global_view_image(scene.depths[view], scene.ids[view], opt.crop_size);
  if (encoders.instance)
    b.instance_tokens = encoders.instance->encode(b.crop_image, TokenKind::InstanceImage);
  if (encoders.global)
    b.global_tokens = encoders.global->encode(b.global_image, TokenKind::GlobalGeometry);
  b.check_frames();
  return b;
}

}  // namespace scenecomp
