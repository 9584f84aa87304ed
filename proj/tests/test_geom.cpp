#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>

#include "scenecomp/geom/grid.hpp"
#include "scenecomp/geom/ops.hpp"
#include "scenecomp/rng.hpp"

using namespace scenecomp;

namespace {

Camera identity_camera(int w, int h, double f) {
  Camera cam;
  cam.intrinsics = Mat3{};
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = w / 2.0;
  cam.intrinsics(1, 2) = h / 2.0;
  cam.world_to_cam = RigidTransform{};
  cam.width = w;
  cam.height = h;
  return cam;
}

// Independent oracle: total least squares plane fit, max residual.
double plane_fit_max_residual(const PointCloud& pc) {
  Eigen::Vector3d centroid(0, 0, 0);
  for (const auto& p : pc.points) centroid += Eigen::Vector3d(p.x, p.y, p.z);
  centroid /= double(pc.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pc.points) {
    Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Vector3d normal = es.eigenvectors().col(0);
  double worst = 0;
  for (const auto& p : pc.points) {
    Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - centroid;
    worst = std::max(worst, std::abs(normal.dot(d)));
  }
  return worst;
}

}  // namespace

TEST_CASE("backproject principal point lands on the optical axis") {
  Camera cam = identity_camera(8, 8, 50.0);
  DepthRaster depth(8, 8, 2.0);
  MaskRaster mask(8, 8, 0);
  // Pixel whose center is exactly the principal point (4.0, 4.0) does not
  // exist on an 8x8 grid of half-integer centers, so use a camera whose
  // principal point sits at a pixel center instead.
  cam.intrinsics(0, 2) = 3.5;
  cam.intrinsics(1, 2) = 3.5;
  mask.at(3, 3) = 1;
  PointCloud pc = backproject_depth(depth, mask, cam);
  REQUIRE(pc.size() == 1);
  CHECK(pc.points[0].x == Catch::Approx(0.0).margin(1e-12));
  CHECK(pc.points[0].y == Catch::Approx(0.0).margin(1e-12));
  CHECK(pc.points[0].z == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("backproject all-false mask gives empty cloud") {
  Camera cam = identity_camera(4, 4, 10.0);
  DepthRaster depth(4, 4, 1.0);
  MaskRaster mask(4, 4, 0);
  CHECK(backproject_depth(depth, mask, cam).empty());
}

TEST_CASE("backproject fronto-parallel plane is coplanar") {
  Camera cam = identity_camera(8, 8, 25.0);
  DepthRaster depth(8, 8, 1.0);
  MaskRaster mask(8, 8, 1);
  PointCloud pc = backproject_depth(depth, mask, cam);
  REQUIRE(pc.size() == 64);
  CHECK(plane_fit_max_residual(pc) < 1e-6);
}

TEST_CASE("backproject dimension mismatch is a contract violation") {
  Camera cam = identity_camera(8, 8, 25.0);
  DepthRaster depth(4, 4, 1.0);
  MaskRaster mask(4, 4, 1);
  CHECK_THROWS_AS(backproject_depth(depth, mask, cam), ContractError);
}

TEST_CASE("compute_aabb basics") {
  PointCloud pc;
  pc.points = {{0, 0, 0}, {1, 2, 3}};
  AABB box = compute_aabb(pc);
  CHECK(box.min_corner.x == 0);
  CHECK(box.max_corner.z == 3);

  PointCloud single;
  single.points = {{0.5, -1, 2}};
  AABB sb = compute_aabb(single);
  CHECK(sb.min_corner.x == sb.max_corner.x);
  CHECK(sb.volume() == 0.0);

  CHECK_THROWS_AS(compute_aabb(PointCloud{}), EmptyGeometryError);
}

TEST_CASE("compute_aabb matches direct scan on random points") {
  RngStream rng(11);
  PointCloud pc;
  for (int i = 0; i < 1000; ++i)
    pc.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  AABB box = compute_aabb(pc);
  CHECK(box.min_corner.x >= 0.0);
  CHECK(box.max_corner.x <= 1.0);
  for (int a = 0; a < 3; ++a) CHECK(box.extent()[a] >= 0.9);
}

TEST_CASE("expand_bound follows the 4x max side rule") {
  AABB b{{0, 0, 0}, {1, 0.5, 0.25}};
  AABB e = expand_bound(b, 4.0);
  CHECK(e.min_corner.x == Catch::Approx(-1.5));
  CHECK(e.min_corner.y == Catch::Approx(-1.75));
  CHECK(e.min_corner.z == Catch::Approx(-1.875));
  CHECK(e.max_corner.x == Catch::Approx(2.5));
  CHECK(e.max_corner.y == Catch::Approx(2.25));
  CHECK(e.max_corner.z == Catch::Approx(2.125));

  AABB unit{{0, 0, 0}, {1, 1, 1}};
  AABB tight = expand_bound(unit, 1.0);
  CHECK(tight.max_side() == Catch::Approx(1.0));
  CHECK(tight.center().x == Catch::Approx(0.5));

  // Degenerate box: the minimum side is substituted before scaling.
  AABB pointbox{{2, 2, 2}, {2, 2, 2}};
  AABB f = expand_bound(pointbox, 4.0);
  CHECK(f.max_side() == Catch::Approx(4.0 * kDegenerateBoxSide));
  CHECK(f.center().x == Catch::Approx(2.0));

  CHECK_THROWS_AS(expand_bound(unit, 0.0), ContractError);
  CHECK_THROWS_AS(expand_bound(unit, -1.0), ContractError);
}

TEST_CASE("expand_bound contains the input for factor >= 1") {
  RngStream rng(3);
  for (int t = 0; t < 200; ++t) {
    Vec3 mn{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    Vec3 ext{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    AABB b{mn, mn + ext};
    double factor = rng.uniform(1.0, 6.0);
    AABB e = expand_bound(b, factor);
    CHECK(e.contains(b));
  }
}

TEST_CASE("normalize maps frame landmarks and round-trips") {
  CubeFrame frame{{{-1, -2, 3}, {1, 0, 5}}, 8};
  PointCloud pc;
  pc.points = {frame.world_box.center(), frame.world_box.min_corner};
  PointCloud n = normalize_points(pc, frame);
  CHECK(n.points[0].norm() < 1e-12);
  CHECK(n.points[1].x == Catch::Approx(-0.5));
  CHECK(n.points[1].y == Catch::Approx(-0.5));
  CHECK(n.points[1].z == Catch::Approx(-0.5));

  RngStream rng(17);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i)
    cloud.points.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)});
  PointCloud back = denormalize_points(normalize_points(cloud, frame), frame);
  for (size_t i = 0; i < cloud.size(); ++i)
    CHECK((back.points[i] - cloud.points[i]).norm() < 1e-9);
}

TEST_CASE("voxelize assigns cells and drops outsiders") {
  CubeFrame frame{{{0, 0, 0}, {1, 1, 1}}, 4};
  PointCloud pc;
  pc.points = {frame.voxel_center(1, 2, 3)};
  auto res = voxelize(pc, frame);
  CHECK(res.dropped == 0);
  CHECK(res.grid.count_above(0.5) == 1);
  CHECK(res.grid.occ(1, 2, 3) == 1.0);

  CHECK(voxelize(PointCloud{}, frame).grid.count_above(0.5) == 0);

  PointCloud out;
  out.points = {{5, 5, 5}, {-1, 0.5, 0.5}};
  auto res2 = voxelize(out, frame);
  CHECK(res2.dropped == 2);
  CHECK(res2.grid.count_above(0.5) == 0);

  // Boundary convention: the max face belongs to the last cell.
  PointCloud edge;
  edge.points = {{1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, {0.25, 0.5, 0.75}};
  auto res3 = voxelize(edge, frame);
  CHECK(res3.dropped == 0);
  CHECK(res3.grid.occ(3, 3, 3) == 1.0);
  CHECK(res3.grid.occ(0, 0, 0) == 1.0);
  CHECK(res3.grid.occ(1, 2, 3) == 1.0);
}

TEST_CASE("voxelize sphere centroid matches the analytic center") {
  RngStream rng(23);
  Vec3 center{0.1, -0.2, 0.3};
  double radius = 0.35;
  PointCloud pc;
  for (int i = 0; i < 10000; ++i) {
    // Uniform on the sphere via normalized Gaussians.
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    pc.points.push_back(center + d.normalized() * radius);
  }
  CubeFrame frame{{{-0.9, -1.2, -0.7}, {1.1, 0.8, 1.3}}, 32};
  auto res = voxelize(pc, frame);
  Vec3 centroid{0, 0, 0};
  size_t n = 0;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      for (int k = 0; k < 32; ++k)
        if (res.grid.occ(i, j, k) > 0.5) {
          centroid += frame.voxel_center(i, j, k);
          ++n;
        }
  REQUIRE(n > 0);
  centroid = centroid / double(n);
  CHECK((centroid - center).norm() < 1.5 * frame.voxel_pitch());
}

TEST_CASE("voxelize is permutation invariant") {
  RngStream rng(29);
  PointCloud pc;
  for (int i = 0; i < 300; ++i)
    pc.points.push_back({rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)});
  CubeFrame frame{{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}}, 8};
  auto a = voxelize(pc, frame);
  PointCloud reversed;
  reversed.points.assign(pc.points.rbegin(), pc.points.rend());
  auto b = voxelize(reversed, frame);
  CHECK(a.grid.occupancy == b.grid.occupancy);
  CHECK(a.dropped == b.dropped);
}

TEST_CASE("grid_to_pointcloud basics and round-trip proximity") {
  CubeFrame frame{{{0, 0, 0}, {2, 2, 2}}, 8};
  OccGrid zero(frame);
  CHECK(grid_to_pointcloud(zero).empty());

  OccGrid one(frame);
  one.occ(4, 5, 6) = 1.0;
  PointCloud pc = grid_to_pointcloud(one);
  REQUIRE(pc.size() == 1);
  CHECK((pc.points[0] - frame.voxel_center(4, 5, 6)).norm() < 1e-12);

  RngStream rng(31);
  PointCloud cloud;
  for (int i = 0; i < 400; ++i)
    cloud.points.push_back({rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)});
  auto vox = voxelize(cloud, frame);
  PointCloud emitted = grid_to_pointcloud(vox.grid);
  double half_pitch = frame.voxel_pitch() * 0.5;
  for (const auto& e : emitted.points) {
    // Nearest-neighbor oracle: every emitted center within half a pitch of
    // some input point on each axis.
    bool found = false;
    for (const auto& p : cloud.points) {
      if (std::abs(p.x - e.x) <= half_pitch + 1e-12 &&
          std::abs(p.y - e.y) <= half_pitch + 1e-12 &&
          std::abs(p.z - e.z) <= half_pitch + 1e-12) {
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("tight_box_of_grid against brute-force scan") {
  CubeFrame frame{{{-1, -1, -1}, {1, 1, 1}}, 8};
  OccGrid g(frame);
  g.occ(2, 3, 4) = 1.0;
  AABB box = tight_box_of_grid(g);
  AABB cell = frame.voxel_box(2, 3, 4);
  CHECK((box.min_corner - cell.min_corner).norm() < 1e-12);
  CHECK((box.max_corner - cell.max_corner).norm() < 1e-12);

  OccGrid full(frame);
  std::fill(full.occupancy.begin(), full.occupancy.end(), 1.0);
  AABB fb = tight_box_of_grid(full);
  CHECK((fb.min_corner - frame.world_box.min_corner).norm() < 1e-12);
  CHECK((fb.max_corner - frame.world_box.max_corner).norm() < 1e-12);

  OccGrid empty(frame);
  CHECK_THROWS_AS(tight_box_of_grid(empty), EmptyGeometryError);

  RngStream rng(37);
  OccGrid rnd(frame);
  for (auto& v : rnd.occupancy) v = rng.uniform() < 0.1 ? 1.0 : 0.0;
  if (rnd.count_above(0.5) > 0) {
    AABB got = tight_box_of_grid(rnd);
    // Oracle: merge the world boxes of occupied cells.
    bool first = true;
    AABB want{};
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        for (int k = 0; k < 8; ++k)
          if (rnd.occ(i, j, k) > 0.5) {
            AABB cb = frame.voxel_box(i, j, k);
            want = first ? cb : want.merged(cb);
            first = false;
          }
    CHECK((got.min_corner - want.min_corner).norm() < 1e-12);
    CHECK((got.max_corner - want.max_corner).norm() < 1e-12);
  }
}

TEST_CASE("tight box of voxelized cloud contains the in-frame AABB minus one pitch") {
  RngStream rng(41);
  CubeFrame frame{{{-1, -1, -1}, {1, 1, 1}}, 16};
  for (int t = 0; t < 20; ++t) {
    PointCloud pc;
    for (int i = 0; i < 200; ++i)
      pc.points.push_back({rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)});
    auto vox = voxelize(pc, frame);
    AABB grid_box = tight_box_of_grid(vox.grid);
    AABB cloud_box = compute_aabb(pc);
    double pitch = frame.voxel_pitch();
    for (int a = 0; a < 3; ++a) {
      CHECK(grid_box.min_corner[a] <= cloud_box.min_corner[a] + 1e-12);
      CHECK(grid_box.max_corner[a] >= cloud_box.max_corner[a] - 1e-12);
      CHECK(grid_box.min_corner[a] >= cloud_box.min_corner[a] - pitch - 1e-12);
      CHECK(grid_box.max_corner[a] <= cloud_box.max_corner[a] + pitch + 1e-12);
    }
  }
}

TEST_CASE("aabb_iou closed forms and properties") {
  AABB unit{{0, 0, 0}, {1, 1, 1}};
  CHECK(aabb_iou(unit, unit) == 1.0);

  AABB far{{5, 5, 5}, {6, 6, 6}};
  CHECK(aabb_iou(unit, far) == 0.0);

  AABB shifted{{0.5, 0, 0}, {1.5, 1, 1}};
  CHECK(aabb_iou(unit, shifted) == Catch::Approx(1.0 / 3.0));

  // Zero-volume union is defined as 0.
  AABB pt{{2, 2, 2}, {2, 2, 2}};
  CHECK(aabb_iou(pt, pt) == 0.0);

  RngStream rng(43);
  for (int t = 0; t < 100; ++t) {
    Vec3 amn{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    Vec3 bmn{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    AABB a{amn, amn + Vec3{rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2)}};
    AABB b{bmn, bmn + Vec3{rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2)}};
    double ab = aabb_iou(a, b);
    CHECK(ab == aabb_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    Vec3 t3{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    CHECK(aabb_iou(a.translated(t3), b.translated(t3)) == Catch::Approx(ab).margin(1e-12));
  }
}
