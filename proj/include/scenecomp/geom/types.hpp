#pragma once

#include <optional>
#include <vector>

#include "scenecomp/common.hpp"
#include "scenecomp/geom/vec.hpp"

namespace scenecomp {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

// World-space point cloud in meters, with optional per-point RGB in [0,1].
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;  // empty, or one entry per point

  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }

  void validate() const {
    SC_CHECK(colors.empty() || colors.size() == points.size(),
             "color count must match point count");
    for (const auto& p : points) SC_CHECK(p.finite(), "non-finite point");
    for (const auto& c : colors)
      SC_CHECK(c.r >= 0 && c.r <= 1 && c.g >= 0 && c.g <= 1 && c.b >= 0 && c.b <= 1,
               "color channel outside [0,1]");
  }
};

struct AABB {
  Vec3 min_corner;
  Vec3 max_corner;

  bool valid() const {
    return min_corner.finite() && max_corner.finite() && min_corner.x <= max_corner.x &&
           min_corner.y <= max_corner.y && min_corner.z <= max_corner.z;
  }
  Vec3 center() const { return (min_corner + max_corner) * 0.5; }
  Vec3 extent() const { return max_corner - min_corner; }
  double max_side() const {
    Vec3 e = extent();
    return std::max(e.x, std::max(e.y, e.z));
  }
  double volume() const {
    Vec3 e = extent();
    return e.x * e.y * e.z;
  }
  bool contains(const Vec3& p) const {
    return p.x >= min_corner.x && p.x <= max_corner.x && p.y >= min_corner.y &&
           p.y <= max_corner.y && p.z >= min_corner.z && p.z <= max_corner.z;
  }
  bool contains(const AABB& o) const {
    return contains(o.min_corner) && contains(o.max_corner);
  }
  AABB merged(const AABB& o) const {
    return {cwise_min(min_corner, o.min_corner), cwise_max(max_corner, o.max_corner)};
  }
  AABB translated(const Vec3& t) const { return {min_corner + t, max_corner + t}; }
  AABB scaled_about_center(double s) const {
    Vec3 c = center(), h = extent() * (0.5 * s);
    return {c - h, c + h};
  }
};

// A world-space cube plus a grid resolution; carries the world <-> canonical
// [-0.5, 0.5]^3 mapping used by normalization and voxelization.
struct CubeFrame {
  AABB world_box;
  int resolution = 2;

  void validate() const {
    SC_CHECK(world_box.valid(), "invalid world box");
    Vec3 e = world_box.extent();
    SC_CHECK(std::abs(e.x - e.y) <= 1e-9 * std::max(1.0, e.x) &&
                 std::abs(e.x - e.z) <= 1e-9 * std::max(1.0, e.x),
             "frame box must be a cube");
    SC_CHECK(e.x > 0, "frame cube must have positive side");
    SC_CHECK(resolution >= 2, "resolution must be >= 2");
  }
  double side() const { return world_box.extent().x; }
  double voxel_pitch() const { return side() / resolution; }

  Vec3 world_to_unit(const Vec3& p) const {
    Vec3 c = world_box.center();
    double inv = 1.0 / side();
    return (p - c) * inv;
  }
  Vec3 unit_to_world(const Vec3& u) const { return world_box.center() + u * side(); }

  // World-space center of voxel (i, j, k).
  Vec3 voxel_center(int i, int j, int k) const {
    double pitch = voxel_pitch();
    return world_box.min_corner +
           Vec3{(i + 0.5) * pitch, (j + 0.5) * pitch, (k + 0.5) * pitch};
  }
  AABB voxel_box(int i, int j, int k) const {
    double pitch = voxel_pitch();
    Vec3 lo = world_box.min_corner + Vec3{i * pitch, j * pitch, k * pitch};
    return {lo, lo + Vec3{pitch, pitch, pitch}};
  }
};

// Pinhole camera. Pixel centers sit at (u + 0.5, v + 0.5); +z is the viewing
// direction in camera space.
struct Camera {
  Mat3 intrinsics;           // [fx s cx; 0 fy cy; 0 0 1], pixels
  RigidTransform world_to_cam;
  int width = 0, height = 0;

  void validate() const {
    SC_CHECK(width > 0 && height > 0, "raster dims must be positive");
    SC_CHECK(intrinsics(1, 0) == 0 && intrinsics(2, 0) == 0 && intrinsics(2, 1) == 0,
             "intrinsics must be upper triangular");
    SC_CHECK(intrinsics(0, 0) > 0 && intrinsics(1, 1) > 0, "focal entries must be positive");
    Mat3 rtr = world_to_cam.rotation.transposed() * world_to_cam.rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        SC_CHECK(std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) < 1e-6,
                 "rotation block must be orthonormal");
  }

  Vec3 world_to_camera(const Vec3& p) const { return world_to_cam.apply(p); }

  // Camera-space point -> raster coordinates (u, v) in pixels plus depth.
  // Returns false when the point is not in front of the camera.
  bool project(const Vec3& cam, double& u, double& v, double& depth) const {
    if (cam.z <= 0) return false;
    depth = cam.z;
    u = intrinsics(0, 0) * cam.x / cam.z + intrinsics(0, 1) * cam.y / cam.z + intrinsics(0, 2);
    v = intrinsics(1, 1) * cam.y / cam.z + intrinsics(1, 2);
    return true;
  }

  // Camera-space ray direction through raster position (u, v).
  Vec3 ray_direction(double u, double v) const {
    double fx = intrinsics(0, 0), fy = intrinsics(1, 1);
    double cx = intrinsics(0, 2), cy = intrinsics(1, 2), skew = intrinsics(0, 1);
    double yc = (v - cy) / fy;
    double xc = (u - cx - skew * yc) / fx;
    return {xc, yc, 1.0};
  }

  Vec3 camera_to_world(const Vec3& cam) const { return world_to_cam.inverse().apply(cam); }
  Vec3 position() const { return world_to_cam.inverse().translation; }
};

// Row-major H x W raster.
template <class T>
struct Raster {
  int height = 0, width = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int h, int w, T fill = T{}) : height(h), width(w), data(size_t(h) * w, fill) {}
  T& at(int v, int u) { return data[size_t(v) * width + u]; }
  const T& at(int v, int u) const { return data[size_t(v) * width + u]; }
  bool inside(int v, int u) const { return v >= 0 && v < height && u >= 0 && u < width; }
  size_t size() const { return data.size(); }
};

using DepthRaster = Raster<double>;
using IdRaster = Raster<uint16_t>;
using MaskRaster = Raster<uint8_t>;

struct RgbRaster {
  int height = 0, width = 0;
  std::vector<Rgb> data;

  RgbRaster() = default;
  RgbRaster(int h, int w) : height(h), width(w), data(size_t(h) * w) {}
  Rgb& at(int v, int u) { return data[size_t(v) * width + u]; }
  const Rgb& at(int v, int u) const { return data[size_t(v) * width + u]; }
};

}  // namespace scenecomp
