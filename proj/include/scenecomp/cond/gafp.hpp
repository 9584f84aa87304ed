#pragma once

#include <vector>

#include "scenecomp/geom/grid.hpp"
#include "scenecomp/geom/ops.hpp"
#include "scenecomp/rng.hpp"

namespace scenecomp {

struct FeatureMap {
  int height = 0, width = 0, channels = 0;
  std::vector<double> data;  // (y, x, c) row-major

  FeatureMap() = default;
  FeatureMap(int h, int w, int c) : height(h), width(w), channels(c) {
    data.assign(size_t(h) * w * c, 0.0);
  }
  double* at(int y, int x) { return data.data() + (size_t(y) * width + x) * channels; }
  const double* at(int y, int x) const {
    return data.data() + (size_t(y) * width + x) * channels;
  }
};

// Per-voxel mean of projected 2D features over the cells the visible cloud
// occupies; cells that received nothing stay zero with a false mask bit.
struct FeatureGrid {
  CubeFrame frame;
  int channels = 0;
  std::vector<double> features;       // (i, j, k, c)
  std::vector<uint8_t> occupancy_mask;  // (i, j, k)

  FeatureGrid() = default;
  FeatureGrid(const CubeFrame& f, int c) : frame(f), channels(c) {
    size_t cells = size_t(f.resolution) * f.resolution * f.resolution;
    features.assign(cells * c, 0.0);
    occupancy_mask.assign(cells, 0);
  }
  size_t cell_index(int i, int j, int k) const {
    return (size_t(i) * frame.resolution + j) * frame.resolution + k;
  }
  const double* cell(int i, int j, int k) const {
    return features.data() + cell_index(i, j, k) * channels;
  }
};

struct GafpResult {
  FeatureGrid grid;
  size_t dropped = 0;  // points projecting outside the raster or the frame
};

// Bilinear feature lookup at each point's projection, mean-pooled per voxel.
inline GafpResult gafp_project(const FeatureMap& feature_map, const PointCloud& pc,
                               const Camera& camera, const CubeFrame& frame) {
  SC_CHECK(feature_map.height == camera.height && feature_map.width == camera.width,
           "feature map dims must match the camera raster");
  frame.validate();
  GafpResult out;
  out.grid = FeatureGrid(frame, feature_map.channels);
  const int r = frame.resolution, c = feature_map.channels;
  std::vector<uint32_t> counts(out.grid.occupancy_mask.size(), 0);
  std::vector<double> feat(c);
  for (const Vec3& p : pc.points) {
    double u, v, d;
    if (!camera.project(camera.world_to_camera(p), u, v, d) || u < 0 ||
        u >= feature_map.width || v < 0 || v >= feature_map.height) {
      ++out.dropped;
      continue;
    }
    bool ox, oy, oz;
    Vec3 unit = frame.world_to_unit(p);
    int i = detail::cell_of(unit.x, r, ox);
    int j = detail::cell_of(unit.y, r, oy);
    int k = detail::cell_of(unit.z, r, oz);
    if (ox || oy || oz) {
      ++out.dropped;
      continue;
    }
    // Bilinear over pixel centers at (px + 0.5, py + 0.5).
    double x = std::clamp(u - 0.5, 0.0, double(feature_map.width - 1));
    double y = std::clamp(v - 0.5, 0.0, double(feature_map.height - 1));
    int x0 = std::min(int(x), feature_map.width - 2 >= 0 ? feature_map.width - 2 : 0);
    int y0 = std::min(int(y), feature_map.height - 2 >= 0 ? feature_map.height - 2 : 0);
    double tx = x - x0, ty = y - y0;
    const double* f00 = feature_map.at(y0, x0);
    const double* f01 = feature_map.at(y0, std::min(x0 + 1, feature_map.width - 1));
    const double* f10 = feature_map.at(std::min(y0 + 1, feature_map.height - 1), x0);
    const double* f11 = feature_map.at(std::min(y0 + 1, feature_map.height - 1),
                                       std::min(x0 + 1, feature_map.width - 1));
    for (int ch = 0; ch < c; ++ch)
      feat[ch] = (1 - ty) * ((1 - tx) * f00[ch] + tx * f01[ch]) +
                 ty * ((1 - tx) * f10[ch] + tx * f11[ch]);
    size_t idx = out.grid.cell_index(i, j, k);
    for (int ch = 0; ch < c; ++ch) out.grid.features[idx * c + ch] += feat[ch];
    counts[idx]++;
    out.grid.occupancy_mask[idx] = 1;
  }
  for (size_t idx = 0; idx < counts.size(); ++idx)
    if (counts[idx] > 1)
      for (int ch = 0; ch < c; ++ch) out.grid.features[idx * c + ch] /= counts[idx];
  return out;
}

inline constexpr int kPixelFeatureChannels = 32;

// Frozen per-pixel featurizer standing in for a pretrained 2D backbone:
// the raw channels [r, g, b, depth_norm, mask] followed by a fixed random
// sinusoidal projection of them. Weights depend only on a built-in seed.
class PixelFeaturizer {
 public:
  PixelFeaturizer() {
    RngStream rng(0x5CEC0DEull);
    int lifted = kPixelFeatureChannels - kRaw;
    weights_.resize(size_t(lifted) * kRaw);
    phases_.resize(lifted);
    for (auto& w : weights_) w = rng.normal() * 2.0;
    for (auto& b : phases_) b = rng.uniform(0, 6.28318530717958647692);
  }

  FeatureMap run(const RgbRaster* rgb, const DepthRaster& depth,
                 const IdRaster& ids) const {
    int h = depth.height, w = depth.width;
    FeatureMap fm(h, w, kPixelFeatureChannels);
    double dmax = 0;
    for (double d : depth.data) dmax = std::max(dmax, d);
    if (dmax <= 0) dmax = 1.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double raw[kRaw];
        Rgb c = rgb ? rgb->at(y, x) : Rgb{0, 0, 0};
        raw[0] = c.r;
        raw[1] = c.g;
        raw[2] = c.b;
        raw[3] = depth.at(y, x) / dmax;
        raw[4] = ids.at(y, x) > 0 ? 1.0 : 0.0;
        double* out = fm.at(y, x);
        for (int ch = 0; ch < kRaw; ++ch) out[ch] = raw[ch];
        for (int ch = kRaw; ch < kPixelFeatureChannels; ++ch) {
          double acc = phases_[ch - kRaw];
          for (int rix = 0; rix < kRaw; ++rix)
            acc += weights_[(ch - kRaw) * kRaw + rix] * raw[rix];
          out[ch] = std::sin(acc);
        }
      }
    return fm;
  }

 private:
  static constexpr int kRaw = 5;
  std::vector<double> weights_;
  std::vector<double> phases_;
};

}  // namespace scenecomp
