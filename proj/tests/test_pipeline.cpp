#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "scenecomp/pipeline/complete.hpp"
#include "scenecomp/pipeline/export_obj.hpp"
#include "support/train_probe.hpp"

using namespace scenecomp;
namespace ts = scenecomp::testsupport;
namespace fs = std::filesystem;

namespace {

struct PipelineFixture {
  SceneSample scene;
  std::unique_ptr<DualBranchModel<double>> coarse, fine, texture;
  StageModels models;
  CompleteOptions opt;

  PipelineFixture() {
    scene = ts::forge_fixture_scene(2000, 96, 3);
    coarse = std::make_unique<DualBranchModel<double>>(ts::miniature_config(Stage::Coarse),
                                                       11, true);
    fine = std::make_unique<DualBranchModel<double>>(ts::miniature_config(Stage::Fine), 12,
                                                     true);
    texture = std::make_unique<DualBranchModel<double>>(ts::miniature_config(Stage::Texture),
                                                        13, true);
    models = {coarse.get(), fine.get(), texture.get()};
    opt.sampling.steps = 2;  // structural tests only need cheap sampling
    opt.sampling.cfg_scale = 1.0;
    opt.mix_alpha = 1.0;
    opt.min_pixels = 16;
  }
};

}  // namespace

TEST_CASE("complete_scene produces every visible instance with ordered boxes") {
  PipelineFixture fx;
  RngStream rng(7);
  CompletedScene out = complete_scene(fx.scene, 0, fx.models, fx.opt, rng);
  REQUIRE(!out.assets.empty());
  for (const auto& a : out.assets) {
    CHECK(a.b_exp.contains(a.b_vis));
    CHECK(a.b_exp.contains(a.b_full));
    CHECK(a.fine_grid.res() == fx.fine->config().grid_res());
    if (a.fine_grid.has_rgb())
      for (double v : a.fine_grid.rgb) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    CHECK(a.timings.coarse_ms >= 0.0);
  }
  // Instance ids are unique and ordered as in the scene.
  for (size_t i = 1; i < out.assets.size(); ++i)
    CHECK(out.assets[i - 1].instance_id < out.assets[i].instance_id);
  CHECK(!out.background.empty());
}

TEST_CASE("per-instance completion is independent of the other instances") {
  PipelineFixture fx;
  RngStream full_rng(7);
  CompletedScene full = complete_scene(fx.scene, 0, fx.models, fx.opt, full_rng);
  REQUIRE(full.assets.size() >= 2);

  // Re-run just one instance with the same derived stream: bit-identical.
  uint16_t id = full.assets[1].instance_id;
  RngStream root(7);
  RngStream inst_rng = root.child("instance", id);
  RngStream frag_rng = inst_rng.child("depth");
  FragmentOptions fopt;
  fopt.severity = fx.opt.severity;
  fopt.min_pixels = fx.opt.min_pixels;
  Fragment frag = extract_fragment(fx.scene, 0, id, fx.opt.mix_alpha, frag_rng, fopt);
  CompletedAsset solo = complete_instance(fx.scene, frag, fx.models, fx.opt, inst_rng);
  REQUIRE(solo.world_points.size() == full.assets[1].world_points.size());
  for (size_t i = 0; i < solo.world_points.size(); ++i) {
    CHECK(solo.world_points.points[i].x == full.assets[1].world_points.points[i].x);
    CHECK(solo.world_points.points[i].z == full.assets[1].world_points.points[i].z);
  }
  CHECK(solo.fine_grid.occupancy == full.assets[1].fine_grid.occupancy);
}

TEST_CASE("complete_scene is deterministic per seed") {
  PipelineFixture fx;
  RngStream r1(9), r2(9), r3(10);
  CompletedScene a = complete_scene(fx.scene, 0, fx.models, fx.opt, r1);
  CompletedScene b = complete_scene(fx.scene, 0, fx.models, fx.opt, r2);
  CompletedScene c = complete_scene(fx.scene, 0, fx.models, fx.opt, r3);
  REQUIRE(a.assets.size() == b.assets.size());
  bool any_diff = false;
  for (size_t i = 0; i < a.assets.size(); ++i) {
    CHECK(a.assets[i].fine_grid.occupancy == b.assets[i].fine_grid.occupancy);
    CHECK(a.assets[i].fine_grid.rgb == b.assets[i].fine_grid.rgb);
    if (a.assets[i].fine_grid.occupancy != c.assets[i].fine_grid.occupancy) any_diff = true;
  }
  CHECK(any_diff);  // a different seed takes a different noise path
}

TEST_CASE("empty coarse generation falls back to a scaled b_vis") {
  PipelineFixture fx;
  // Push the sampled latent far negative so no voxel clears the threshold:
  // a constant strong positive velocity drains z below zero everywhere.
  auto* bias = fx.coarse->registry().find("base.final.head.b");
  REQUIRE(bias != nullptr);
  std::fill(bias->w.data.begin(), bias->w.data.end(), 6.0);

  auto pairs = ts::visible_pairs(fx.scene);
  REQUIRE(!pairs.empty());
  RngStream rng(21);
  RngStream frag_rng = rng.child("depth");
  Fragment frag = extract_fragment(fx.scene, pairs[0].first, pairs[0].second, 0.0, frag_rng);
  auto [grid, b_full, fallback] = coarse_complete(fx.scene, frag, fx.models, fx.opt, rng);
  CHECK(fallback);
  AABB b_vis = compute_aabb(frag.points);
  CHECK(b_full.contains(b_vis));
  CHECK(b_full.max_side() == Catch::Approx(b_vis.max_side() * 1.2).epsilon(1e-9));
}

TEST_CASE("no view with a visible instance raises EmptyScene") {
  PipelineFixture fx;
  CompleteOptions strict = fx.opt;
  strict.min_pixels = 1 << 20;  // nothing can reach this
  RngStream rng(31);
  CHECK_THROWS_AS(complete_scene(fx.scene, 0, fx.models, strict, rng), EmptySceneError);
}

TEST_CASE("obj export writes cubes, refuses empty scenes, and is byte-stable") {
  CompletedScene scene;
  CompletedAsset asset;
  asset.instance_id = 3;
  CubeFrame frame{{{0, 0, 0}, {1, 1, 1}}, 4};
  asset.fine_grid = OccGrid(frame);
  asset.fine_grid.occ(1, 2, 3) = 1.0;
  asset.fine_grid.allocate_rgb();
  asset.fine_grid.set_rgb(1, 2, 3, {1.0, 0.25, 0.0});
  asset.world_points = grid_to_pointcloud(asset.fine_grid);
  scene.assets.push_back(asset);

  fs::path dir = fs::temp_directory_path() / "scenecomp_obj_test";
  fs::create_directories(dir);
  fs::path path = dir / "one.obj";
  export_scene(scene, path);
  std::string text = io::read_file(path);
  size_t vlines = 0, flines = 0;
  for (size_t pos = 0; pos < text.size();) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) break;
    std::string line = text.substr(pos, eol - pos);
    if (line.rfind("v ", 0) == 0) ++vlines;
    if (line.rfind("f ", 0) == 0) ++flines;
    pos = eol + 1;
  }
  CHECK(vlines == 8);
  CHECK(flines == 12);
  CHECK(text.find("o instance_3") != std::string::npos);
  CHECK(text.find("1.0000 0.2500 0.0000") != std::string::npos);

  export_scene(scene, dir / "two.obj");
  CHECK(io::read_file(dir / "two.obj") == text);

  CompletedScene empty;
  CHECK_THROWS_AS(export_scene(empty, dir / "never.obj"), EmptySceneError);
  fs::remove_all(dir);
}

TEST_CASE("instance visibility delegates to the grid kernel") {
  SceneSample scene;
  scene.floor = AABB{{-5, -5, -0.05}, {5, 5, 0}};
  InstanceRecord inst;
  inst.instance_id = 1;
  inst.primitive.kind = PrimitiveKind::Box;
  inst.primitive.params = {0.4, 0.4, 0.4};
  RngStream rng(4);
  inst.gt_surface = sample_primitive_surface(inst.primitive, inst.pose(), 2048, rng);
  inst.gt_box = compute_aabb(inst.gt_surface);
  scene.instances.push_back(inst);
  Camera cam;
  cam.width = 64;
  cam.height = 64;
  cam.intrinsics(0, 0) = 70;
  cam.intrinsics(1, 1) = 70;
  cam.intrinsics(0, 2) = 32;
  cam.intrinsics(1, 2) = 32;
  Mat3 rot;
  rot.m = {-1, 0, 0, 0, 0, -1, 0, 1, 0};
  Vec3 eye{0, -2.0, 0.4};
  cam.world_to_cam = {rot, rot * eye * -1.0};
  RasterOutput ro = rasterize(scene, cam);

  auto vox = voxelize(inst.gt_surface, cube_frame_of(inst.gt_box, 16));
  double from_grid = visibility_ratio_of_grid(vox.grid, cam, ro.depth);
  double from_instance = visibility_ratio(inst, cam, ro.depth);
  CHECK(from_grid == from_instance);
  CHECK(from_grid > 0.0);
}
