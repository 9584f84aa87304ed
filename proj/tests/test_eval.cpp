#include <catch2/catch_amalgamated.hpp>

#include "scenecomp/eval/metrics.hpp"
#include "support/train_probe.hpp"

using namespace scenecomp;

namespace {

PointCloud random_cloud(RngStream& rng, int n, double radius = 1.0) {
  PointCloud pc;
  for (int i = 0; i < n; ++i)
    pc.points.push_back(
        {rng.uniform(-radius, radius), rng.uniform(-radius, radius), rng.uniform(-radius, radius)});
  return pc;
}

// O(n^2) reference implementations.
double chamfer_oracle(const PointCloud& a, const PointCloud& b) {
  auto mean_nn = [](const PointCloud& from, const PointCloud& to) {
    double sum = 0;
    for (const auto& p : from.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to.points) best = std::min(best, (p - q).norm());
      sum += best;
    }
    return sum / from.size();
  };
  return 0.5 * (mean_nn(a, b) + mean_nn(b, a));
}

double fscore_oracle(const PointCloud& a, const PointCloud& b, double tau) {
  auto frac_within = [tau](const PointCloud& from, const PointCloud& to) {
    size_t hit = 0;
    for (const auto& p : from.points) {
      for (const auto& q : to.points)
        if ((p - q).norm() <= tau) {
          ++hit;
          break;
        }
    }
    return double(hit) / from.size();
  };
  double precision = frac_within(a, b), recall = frac_within(b, a);
  if (precision + recall == 0) return 0.0;
  return 200.0 * precision * recall / (precision + recall);
}

Mat3 random_rotation(RngStream& rng) {
  // Random unit quaternion -> rotation matrix.
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double pi2 = 2 * 3.14159265358979323846;
  double qw = std::sqrt(1 - u1) * std::sin(pi2 * u2);
  double qx = std::sqrt(1 - u1) * std::cos(pi2 * u2);
  double qy = std::sqrt(u1) * std::sin(pi2 * u3);
  double qz = std::sqrt(u1) * std::cos(pi2 * u3);
  Mat3 r;
  r.m = {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw),
         2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw),
         2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)};
  return r;
}

PointCloud transformed(const PointCloud& pc, const Mat3& r, const Vec3& t) {
  PointCloud out;
  for (const auto& p : pc.points) out.points.push_back(r * p + t);
  return out;
}

}  // namespace

TEST_CASE("chamfer closed forms and oracle equality") {
  RngStream rng(1);
  PointCloud a = random_cloud(rng, 100);
  CHECK(chamfer(a, a) == 0.0);

  PointCloud p, q;
  p.points = {{0, 0, 0}};
  q.points = {{0.3, 0.4, 0.0}};
  CHECK(chamfer(p, q) == Catch::Approx(0.5).margin(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    PointCloud x = random_cloud(rng, 300), y = random_cloud(rng, 300);
    CHECK(std::abs(chamfer(x, y) - chamfer_oracle(x, y)) < 1e-10);
  }
  CHECK_THROWS_AS(chamfer(PointCloud{}, a), EmptyGeometryError);
}

TEST_CASE("fscore closed forms and oracle equality") {
  RngStream rng(2);
  PointCloud a = random_cloud(rng, 200);
  CHECK(fscore(a, a, 0.1) == 100.0);

  PointCloud far_cloud;
  for (const auto& p : a.points) far_cloud.points.push_back(p + Vec3{10, 0, 0});
  CHECK(fscore(a, far_cloud, 0.1) == 0.0);

  for (int trial = 0; trial < 10; ++trial) {
    PointCloud x = random_cloud(rng, 250), y = random_cloud(rng, 250);
    double tau = rng.uniform(0.05, 0.5);
    CHECK(fscore(x, y, tau) == fscore_oracle(x, y, tau));
  }
}

TEST_CASE("metrics are symmetric and rigid invariant") {
  RngStream rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud a = random_cloud(rng, 150), b = random_cloud(rng, 170);
    double cd = chamfer(a, b);
    CHECK(chamfer(b, a) == Catch::Approx(cd).margin(1e-12));
    double fs = fscore(a, b, 0.2);
    CHECK(fscore(b, a, 0.2) == Catch::Approx(fs).margin(1e-12));

    Mat3 r = random_rotation(rng);
    Vec3 t{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    PointCloud ar = transformed(a, r, t), br = transformed(b, r, t);
    CHECK(chamfer(ar, br) == Catch::Approx(cd).margin(1e-9));
    CHECK(fscore(ar, br, 0.2) == Catch::Approx(fs).margin(1e-9));
  }
}

TEST_CASE("fscore is monotonically non-decreasing in tau") {
  RngStream rng(4);
  PointCloud a = random_cloud(rng, 200), b = random_cloud(rng, 200);
  double prev = 0;
  for (double tau : {0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
    double f = fscore(a, b, tau);
    CHECK(f >= prev - 1e-12);
    prev = f;
  }
}

TEST_CASE("spatial hash equals the exhaustive oracle, including far queries") {
  RngStream rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud pts = random_cloud(rng, 500);
    SpatialHashIndex index(pts, 0.1);
    for (int q = 0; q < 200; ++q) {
      Vec3 query{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
      if (q % 4 == 0) query = query * 10.0;  // far outside the cloud
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : pts.points) best = std::min(best, (p - query).norm());
      CHECK(index.nearest_distance(query) == best);
    }
  }
}

TEST_CASE("evaluate_scene fixed point and displacement sensitivity") {
  namespace ts = scenecomp::testsupport;
  SceneSample scene = ts::forge_fixture_scene(1200, 96, 3);
  MetricConfig cfg;
  cfg.samples_per_object = 1024;

  CompletedScene pred = identity_prediction(scene);
  EvalReport rep = evaluate_scene(pred, scene, cfg);
  CHECK(rep.cd_scene == Catch::Approx(0.0).margin(1e-12));
  CHECK(rep.fs_scene == 100.0);
  CHECK(rep.cd_object == Catch::Approx(0.0).margin(1e-12));
  CHECK(rep.fs_object == 100.0);
  CHECK(rep.bbox_iou == Catch::Approx(1.0).margin(1e-12));
  CHECK(rep.missing.empty());

  // A thin shell translated by 2 tau in normalized units scores fscore 0:
  // every displaced sample ends up farther than tau from the slab. Verified
  // against the brute-force oracle inside fscore's own tests.
  SceneSample slab_scene;
  slab_scene.scene_id = 99;
  slab_scene.seed = 99;
  {
    InstanceRecord slab;
    slab.instance_id = 1;
    slab.primitive.kind = PrimitiveKind::Box;
    slab.primitive.params = {0.4, 0.4, 0.004};
    RngStream srng(77);
    slab.gt_surface = sample_primitive_surface(slab.primitive, slab.pose(), 2048, srng);
    slab.gt_box = compute_aabb(slab.gt_surface);
    slab_scene.instances.push_back(slab);
  }
  double world_shift = 2.0 * cfg.tau * slab_scene.instances[0].gt_box.max_side();
  CompletedScene shifted = identity_prediction(slab_scene);
  for (auto& p : shifted.assets[0].world_points.points) p.z += world_shift;
  EvalReport rep2 = evaluate_scene(shifted, slab_scene, cfg);
  REQUIRE(rep2.per_instance.size() == 1);
  CHECK(rep2.per_instance[0].fs == 0.0);
  CHECK(rep2.per_instance[0].cd > 0.0);

  // A missing instance lands in the missing list and is excluded from means.
  CompletedScene partial = identity_prediction(scene);
  uint16_t dropped = partial.assets.back().instance_id;
  partial.assets.pop_back();
  EvalReport rep3 = evaluate_scene(partial, scene, cfg);
  REQUIRE(rep3.missing.size() == 1);
  CHECK(rep3.missing[0] == dropped);
  CHECK(rep3.per_instance.size() == scene.instances.size() - 1);
  CHECK(rep3.fs_object == 100.0);
}
