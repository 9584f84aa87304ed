#include <catch2/catch_amalgamated.hpp>

#include "scenecomp/cond/bundle.hpp"
#include "scenecomp/flow/model.hpp"
#include "support/train_probe.hpp"

using namespace scenecomp;
namespace ts = scenecomp::testsupport;

TEST_CASE("sinusoidal embedding closed forms") {
  auto zero = sinusoidal_embed(0.0, 32);
  for (int k = 0; k < 16; ++k) {
    CHECK(zero[2 * k] == 0.0);       // sin terms
    CHECK(zero[2 * k + 1] == 1.0);   // cos terms
  }
  CHECK(sinusoidal_embed(0.37, 32) == sinusoidal_embed(0.37, 32));

  auto a = sinusoidal_embed(0.0, 32), b = sinusoidal_embed(0.5, 32);
  double d2 = 0;
  for (int i = 0; i < 32; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(std::sqrt(d2) > 0.1);

  double norm2 = 0;
  for (double v : b) norm2 += v * v;
  CHECK(std::sqrt(norm2) <= std::sqrt(32.0));

  CHECK_THROWS_AS(sinusoidal_embed(0.5, 7), ContractError);
}

TEST_CASE("sinusoidal embedding is injective on the milli-grid") {
  // Strict monotonicity of the lowest-frequency sin component implies
  // pairwise-distinct embeddings over {0, 1e-3, ..., 1}.
  double prev = -1;
  for (int i = 0; i <= 1000; ++i) {
    auto e = sinusoidal_embed(i * 1e-3, 32);
    CHECK(e[0] > prev);
    prev = e[0];
  }
  // Spot-check full pairwise distinctness on a coarser subset.
  std::vector<std::vector<double>> embs;
  for (int i = 0; i <= 100; ++i) embs.push_back(sinusoidal_embed(i * 0.01, 32));
  for (size_t i = 0; i < embs.size(); ++i)
    for (size_t j = i + 1; j < embs.size(); ++j) {
      double d2 = 0;
      for (int k = 0; k < 32; ++k) d2 += (embs[i][k] - embs[j][k]) * (embs[i][k] - embs[j][k]);
      CHECK(d2 > 0.0);
    }
}

namespace {

Camera straight_camera(int size, double f) {
  Camera cam;
  cam.width = size;
  cam.height = size;
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = size / 2.0;
  cam.intrinsics(1, 2) = size / 2.0;
  return cam;
}

}  // namespace

TEST_CASE("gafp bilinear node exactness, mean pooling, and drops") {
  const int size = 16;
  Camera cam = straight_camera(size, 20.0);
  FeatureMap fm(size, size, 3);
  RngStream rng(5);
  for (auto& v : fm.data) v = rng.uniform();
  CubeFrame frame{{{-1, -1, 1}, {1, 1, 3}}, 8};

  // A point projecting exactly onto the pixel-center grid node (u = px+0.5).
  // Pixel (9, 6): u = 9.5, v = 6.5 -> cam x = (9.5-8)/20*z, y = (6.5-8)/20*z.
  double z = 2.0;
  Vec3 p{(9.5 - 8.0) / 20.0 * z, (6.5 - 8.0) / 20.0 * z, z};
  PointCloud pc;
  pc.points = {p};
  auto res = gafp_project(fm, pc, cam, frame);
  CHECK(res.dropped == 0);
  bool found = false;
  for (int i = 0; i < 8 && !found; ++i)
    for (int j = 0; j < 8 && !found; ++j)
      for (int k = 0; k < 8 && !found; ++k)
        if (res.grid.occupancy_mask[res.grid.cell_index(i, j, k)]) {
          const double* f = res.grid.cell(i, j, k);
          const double* want = fm.at(6, 9);
          for (int c = 0; c < 3; ++c) CHECK(f[c] == Catch::Approx(want[c]).margin(1e-12));
          found = true;
        }
  CHECK(found);

  // Empty cloud: all-zero grid, empty mask.
  auto empty = gafp_project(fm, PointCloud{}, cam, frame);
  for (double v : empty.grid.features) CHECK(v == 0.0);
  for (uint8_t m : empty.grid.occupancy_mask) CHECK(m == 0);
}

TEST_CASE("gafp mean rule and outside-drop counting") {
  const int size = 16;
  Camera cam = straight_camera(size, 20.0);
  FeatureMap fm(size, size, 2);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      fm.at(y, x)[0] = x;
      fm.at(y, x)[1] = y;
    }
  CubeFrame frame{{{-2, -2, 1}, {2, 2, 5}}, 4};  // voxels of one meter
  double z = 2.0;
  auto at_pixel = [&](double u, double v) {
    return Vec3{(u - 8.0) / 20.0 * z, (v - 8.0) / 20.0 * z, z};
  };
  PointCloud pc;
  pc.points = {at_pixel(3.5, 7.5), at_pixel(4.5, 7.5)};  // same voxel, features 3 and 4
  auto res = gafp_project(fm, pc, cam, frame);
  bool found = false;
  for (int i = 0; i < 4 && !found; ++i)
    for (int j = 0; j < 4 && !found; ++j)
      for (int k = 0; k < 4 && !found; ++k)
        if (res.grid.occupancy_mask[res.grid.cell_index(i, j, k)]) {
          CHECK(res.grid.cell(i, j, k)[0] == Catch::Approx(3.5).margin(1e-12));
          found = true;
        }
  CHECK(found);

  PointCloud outside;
  outside.points = {{100, 0, 2}, {0, 0, -5}};  // off-raster and behind camera
  auto res2 = gafp_project(fm, outside, cam, frame);
  CHECK(res2.dropped == 2);
}

TEST_CASE("gafp locality and translation equivariance") {
  const int size = 24;
  Camera cam = straight_camera(size, 30.0);
  FeatureMap fm(size, size, 4);
  RngStream rng(6);
  for (auto& v : fm.data) v = rng.normal();
  CubeFrame frame{{{-1.5, -1.5, 1}, {1.5, 1.5, 4}}, 8};

  PointCloud pc;
  for (int i = 0; i < 200; ++i) {
    double z = rng.uniform(1.5, 3.5);
    pc.points.push_back({rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), z});
  }
  auto full = gafp_project(fm, pc, cam, frame);

  // Locality: zeroing points outside one voxel leaves that voxel unchanged.
  int ti = -1, tj = -1, tk = -1;
  for (int i = 0; i < 8 && ti < 0; ++i)
    for (int j = 0; j < 8 && ti < 0; ++j)
      for (int k = 0; k < 8 && ti < 0; ++k)
        if (full.grid.occupancy_mask[full.grid.cell_index(i, j, k)]) {
          ti = i;
          tj = j;
          tk = k;
        }
  REQUIRE(ti >= 0);
  AABB cell = frame.voxel_box(ti, tj, tk);
  PointCloud only;
  for (const auto& p : pc.points) {
    Vec3 u = frame.world_to_unit(p);
    bool ox, oy, oz;
    int i = detail::cell_of(u.x, 8, ox), j = detail::cell_of(u.y, 8, oy),
        k = detail::cell_of(u.z, 8, oz);
    if (!ox && !oy && !oz && i == ti && j == tj && k == tk) only.points.push_back(p);
  }
  (void)cell;
  auto local = gafp_project(fm, only, cam, frame);
  for (int c = 0; c < 4; ++c)
    CHECK(local.grid.cell(ti, tj, tk)[c] ==
          Catch::Approx(full.grid.cell(ti, tj, tk)[c]).margin(1e-12));

  // Equivariance: translating cloud, camera, and frame together changes
  // nothing numerically.
  Vec3 offset{3.0, -2.0, 1.5};
  PointCloud moved;
  for (const auto& p : pc.points) moved.points.push_back(p + offset);
  Camera cam2 = cam;
  // world_to_cam x -> R(x) + t; shifting the world by `offset` keeps the
  // camera view identical when t absorbs R*offset.
  cam2.world_to_cam.translation =
      cam.world_to_cam.translation - cam.world_to_cam.rotation * offset;
  CubeFrame frame2{{frame.world_box.min_corner + offset, frame.world_box.max_corner + offset},
                  frame.resolution};
  auto shifted = gafp_project(fm, moved, cam2, frame2);
  for (size_t i = 0; i < full.grid.features.size(); ++i)
    CHECK(shifted.grid.features[i] == Catch::Approx(full.grid.features[i]).margin(1e-9));
  CHECK(shifted.grid.occupancy_mask == full.grid.occupancy_mask);
}

TEST_CASE("patch encoders are deterministic and input sensitive") {
  ModelConfig cfg = ts::miniature_config();
  DualBranchModel<double> model(cfg, 3, true);

  nn::Tensor<double> zero({4, cfg.crop_size, cfg.crop_size});
  TokenSeq t0 = model.instance_encoder().encode(zero, TokenKind::InstanceImage);
  CHECK(t0.tokens.all_finite());

  RngStream rng(8);
  nn::Tensor<double> img = nn::Tensor<double>::randn(rng, {4, cfg.crop_size, cfg.crop_size});
  TokenSeq ta = model.instance_encoder().encode(img, TokenKind::InstanceImage);
  TokenSeq tb = model.instance_encoder().encode(img, TokenKind::InstanceImage);
  CHECK(ta.tokens.data == tb.tokens.data);

  // Change one patch: tokens must differ.
  nn::Tensor<double> img2 = img;
  img2.data[3] += 1.0;
  TokenSeq tc = model.instance_encoder().encode(img2, TokenKind::InstanceImage);
  CHECK(ta.tokens.data != tc.tokens.data);

  // Global encoder: an 8-pixel content shift changes the tokens.
  SceneSample scene = ts::forge_fixture_scene(3000, 64, 2);
  auto g1 = global_view_image(scene.depths[0], scene.ids[0], cfg.crop_size);
  DepthRaster shifted_depth(scene.depths[0].height, scene.depths[0].width, 0.0);
  IdRaster shifted_ids(scene.ids[0].height, scene.ids[0].width, 0);
  for (int v = 0; v < shifted_depth.height; ++v)
    for (int u = 8; u < shifted_depth.width; ++u) {
      shifted_depth.at(v, u) = scene.depths[0].at(v, u - 8);
      shifted_ids.at(v, u) = scene.ids[0].at(v, u - 8);
    }
  auto g2 = global_view_image(shifted_depth, shifted_ids, cfg.crop_size);
  TokenSeq ga = model.global_encoder().encode(g1, TokenKind::GlobalGeometry);
  TokenSeq gb = model.global_encoder().encode(g2, TokenKind::GlobalGeometry);
  CHECK(ga.tokens.data != gb.tokens.data);
}

TEST_CASE("build_condition assembles stage-dependent bundles") {
  ModelConfig cfg = ts::miniature_config();
  DualBranchModel<double> model(cfg, 4, true);
  SceneSample scene = ts::forge_fixture_scene(4000, 64, 2);
  auto pairs = ts::visible_pairs(scene, 16);
  REQUIRE(!pairs.empty());
  RngStream rng(9);
  Fragment frag = extract_fragment(scene, pairs[0].first, pairs[0].second, 0.25, rng);
  CubeFrame frame = coarse_frame(frag.points, cfg);

  BuildConditionOptions bopt;
  bopt.crop_size = cfg.crop_size;
  ConditionBundle coarse = build_condition(scene, frag, Stage::Coarse, frame,
                                           model.encoders(), 0.25, 0.0, bopt);
  CHECK_FALSE(coarse.null_flag);
  CHECK_FALSE(coarse.visibility.has_value());
  CHECK(coarse.depth_ratio.value == 0.25);
  CHECK(coarse.partial_grid.count_above(0.5) > 0);
  CHECK(coarse.instance_tokens.tokens.rows() > 0);
  coarse.check_frames();

  ConditionBundle tex = build_condition(scene, frag, Stage::Texture, frame, model.encoders(),
                                        0.25, 0.8, bopt);
  REQUIRE(tex.visibility.has_value());
  CHECK(tex.visibility->value == 0.8);

  BuildConditionOptions null_opt;
  null_opt.null_request = true;
  null_opt.crop_size = cfg.crop_size;
  ConditionBundle null_bundle = build_condition(scene, frag, Stage::Coarse, frame,
                                                model.encoders(), 0.25, 0.0, null_opt);
  CHECK(null_bundle.null_flag);
  CHECK(null_bundle.partial_grid.count_above(0.0) == 0);

  Fragment empty_frag;
  empty_frag.instance_id = 999;
  CHECK_THROWS_AS(build_condition(scene, empty_frag, Stage::Coarse, frame, model.encoders(),
                                  0.25, 0.0, bopt),
                  EmptyGeometryError);
}
