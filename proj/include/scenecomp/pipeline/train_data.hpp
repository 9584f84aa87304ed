#pragma once

#include "scenecomp/decomp/fragment.hpp"
#include "scenecomp/flow/train.hpp"
#include "scenecomp/forge/scene.hpp"

namespace scenecomp {

// Renders the instance alone from the given camera and crops it: the clean,
// unoccluded view the ORFA teacher is conditioned on.
inline nn::Tensor<double> render_clean_crop(const InstanceRecord& inst, const Camera& camera,
                                            int crop_size) {
  std::vector<Triangle> tris;
  tessellate_primitive(tris, inst.primitive, inst.pose(), inst.instance_id);
  RasterOutput ro = rasterize_triangles(tris, camera);
  MaskRaster mask(ro.ids.height, ro.ids.width, 0);
  for (size_t i = 0; i < ro.ids.data.size(); ++i)
    mask.data[i] = ro.ids.data[i] == inst.instance_id ? 1 : 0;
  return instance_crop(&ro.rgb, mask, crop_size);
}

// The world cube a stage generates in. Coarse: the conservative expansion of
// the fragment's visible box. Fine and texture: the cubified full box.
inline CubeFrame coarse_frame(const PointCloud& fragment_points, const ModelConfig& cfg,
                              double expand_factor = 4.0) {
  AABB b_vis = compute_aabb(fragment_points);
  return CubeFrame{expand_bound(b_vis, expand_factor), cfg.grid_res()};
}

inline CubeFrame fine_frame(const AABB& b_full, const ModelConfig& cfg) {
  return cube_frame_of(b_full, cfg.grid_res());
}

// Builds one scene-level training sample for a stage: fragment extraction at
// the given alpha, condition bundle, GT latent in the stage frame, and the
// teacher's clean crop.
template <class T>
TrainSample make_scene_sample(const SceneSample& scene, int view, uint16_t instance_id,
                              Stage stage, const ModelConfig& cfg,
                              const CondEncoders<T>& encoders, double alpha,
                              RngStream& rng, const FragmentOptions& fopt = {}) {
  Fragment frag = extract_fragment(scene, view, instance_id, alpha, rng, fopt);
  const InstanceRecord* inst = scene.find_instance(instance_id);
  SC_CHECK(inst != nullptr, "unknown instance id");

  CubeFrame frame = stage == Stage::Coarse ? coarse_frame(frag.points, cfg)
                                           : fine_frame(inst->gt_box, cfg);
  double vis = stage == Stage::Texture
                   ? visibility_ratio(*inst, scene.cameras[view], scene.depths[view])
                   : 0.0;
  BuildConditionOptions bopt;
  bopt.crop_size = cfg.crop_size;
  TrainSample s;
  s.cond = build_condition(scene, frag, stage, frame, encoders, alpha, vis, bopt);
  auto gt_vox = voxelize(inst->gt_surface, frame);
  if (stage == Stage::Texture) {
    s.cond.base_occupancy = gt_vox.grid;
    s.cond.base_occupancy->rgb.clear();
    s.z0 = rgb_to_latent(gt_vox.grid);
  } else {
    OccGrid plain = gt_vox.grid;
    plain.rgb.clear();
    s.z0 = occupancy_to_latent(plain);
  }
  s.clean_crop = render_clean_crop(*inst, scene.cameras[view], cfg.crop_size);
  return s;
}

// Canonical single-primitive sample for object-prior pretraining: a randomly
// rotated asset in its own cube frame, with a clean render as conditioning.
struct ObjectSample {
  TrainSample train;
  OccGrid gt_grid;
};

template <class T>
ObjectSample make_object_sample(const ModelConfig& cfg, const CondEncoders<T>& encoders,
                                RngStream& rng) {
  Primitive prim = sample_primitive(rng);
  InstancePose pose{1.0, rng.uniform(0, 2 * 3.14159265358979323846), {0, 0, 0}};
  PointCloud surface = sample_primitive_surface(prim, pose, 4096, rng);
  AABB box = primitive_world_aabb(prim, pose);
  CubeFrame frame = cube_frame_of(box, cfg.grid_res());
  auto vox = voxelize(surface, frame);

  // Clean render from a random upper-hemisphere viewpoint.
  InstanceRecord inst;
  inst.instance_id = 1;
  inst.primitive = prim;
  inst.scale = pose.scale;
  inst.z_rotation = pose.z_rotation;
  inst.translation = pose.translation;
  Camera cam;
  cam.width = 64;
  cam.height = 64;
  double f = 32.0 / std::tan(30.0 * 3.14159265358979323846 / 360.0);
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = 32;
  cam.intrinsics(1, 2) = 32;
  double pi = 3.14159265358979323846;
  double azim = rng.uniform(0, 2 * pi), elev = rng.uniform(0.25, 1.1);
  double radius = box.max_side() * rng.uniform(1.6, 2.4) / std::tan(15.0 * pi / 180.0) * 0.5;
  Vec3 target = box.center();
  Vec3 eye = target + Vec3{radius * std::cos(azim) * std::cos(elev),
                           radius * std::sin(azim) * std::cos(elev), radius * std::sin(elev)};
  Vec3 zc = (target - eye).normalized();
  Vec3 xc = zc.cross(Vec3{0, 0, 1}).normalized();
  Vec3 yc = zc.cross(xc);
  Mat3 rot;
  for (int j = 0; j < 3; ++j) {
    rot(0, j) = xc[j];
    rot(1, j) = yc[j];
    rot(2, j) = zc[j];
  }
  cam.world_to_cam = {rot, rot * eye * -1.0};

  ObjectSample out;
  out.train.clean_crop = render_clean_crop(inst, cam, cfg.crop_size);

  ConditionBundle& b = out.train.cond;
  b.partial_grid = OccGrid(frame);
  b.gafp = FeatureGrid(frame, kPixelFeatureChannels);
  b.depth_ratio = RatioEmbedding::of(0.0);
  b.crop_image = out.train.clean_crop;
  b.global_image = nn::Tensor<double>({2, cfg.crop_size, cfg.crop_size});
  if (encoders.instance)
    b.instance_tokens = encoders.instance->encode(b.crop_image, TokenKind::InstanceImage);

  if (cfg.stage == Stage::Texture) {
    b.visibility = RatioEmbedding::of(1.0);
    OccGrid canvas = vox.grid;
    canvas.rgb.clear();
    b.base_occupancy = canvas;
    out.train.z0 = rgb_to_latent(vox.grid);
  } else {
    OccGrid plain = vox.grid;
    plain.rgb.clear();
    out.train.z0 = occupancy_to_latent(plain);
  }
  out.gt_grid = vox.grid;
  return out;
}

}  // namespace scenecomp
