#pragma once

#include "scenecomp/geom/types.hpp"
#include "scenecomp/rng.hpp"

namespace scenecomp {

// Parametric stand-in for an external monocular depth estimator: a smooth
// low-frequency multiplicative warp plus per-pixel noise and a global
// scale/shift, all proportional to `severity`. severity 0 returns the input
// bit-exactly.
inline DepthRaster perturb_depth(const DepthRaster& d_gt, RngStream& rng,
                                 double severity = 0.1) {
  SC_CHECK(severity >= 0, "severity must be non-negative");
  const int h = d_gt.height, w = d_gt.width;
  const int grid = 5;
  std::vector<double> field(grid * grid);
  for (auto& v : field) v = rng.normal() * severity;
  double gscale = 1.0 + rng.normal() * 0.5 * severity;
  double mean_depth = 0;
  int fg = 0;
  for (double v : d_gt.data)
    if (v > 0) {
      mean_depth += v;
      ++fg;
    }
  mean_depth = fg > 0 ? mean_depth / fg : 1.0;
  double gshift = rng.normal() * 0.05 * severity * mean_depth;

  DepthRaster out(h, w, 0.0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double noise = rng.normal();  // drawn for every pixel, mask-independent
      double d = d_gt.at(v, u);
      if (d <= 0) continue;
      double fy = h > 1 ? double(v) / (h - 1) * (grid - 1) : 0;
      double fx = w > 1 ? double(u) / (w - 1) * (grid - 1) : 0;
      int y0 = std::min(int(fy), grid - 2), x0 = std::min(int(fx), grid - 2);
      double ty = fy - y0, tx = fx - x0;
      double f00 = field[y0 * grid + x0], f01 = field[y0 * grid + x0 + 1];
      double f10 = field[(y0 + 1) * grid + x0], f11 = field[(y0 + 1) * grid + x0 + 1];
      double f = (1 - ty) * ((1 - tx) * f00 + tx * f01) + ty * ((1 - tx) * f10 + tx * f11);
      double est = gscale * d * (1.0 + f) + gshift + noise * 0.03 * severity * d;
      out.at(v, u) = std::max(est, 1e-4);
    }
  }
  return out;
}

struct DepthMix {
  DepthRaster d_gt;
  DepthRaster d_est;
  double alpha = 0.0;
  DepthRaster d;  // alpha * d_est + (1 - alpha) * d_gt
};

// Pointwise convex combination. The endpoints return the inputs bit-exactly,
// and equal inputs pass through unchanged for every alpha (the combination
// is computed as d_gt + alpha * (d_est - d_gt)).
inline DepthRaster mix_depth(const DepthRaster& d_gt, const DepthRaster& d_est, double alpha) {
  SC_CHECK(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
  SC_CHECK(d_gt.height == d_est.height && d_gt.width == d_est.width,
           "depth rasters must share a shape");
  if (alpha == 0.0) return d_gt;
  if (alpha == 1.0) return d_est;
  DepthRaster out(d_gt.height, d_gt.width, 0.0);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = d_gt.data[i] + alpha * (d_est.data[i] - d_gt.data[i]);
  return out;
}

inline DepthMix make_depth_mix(DepthRaster d_gt, DepthRaster d_est, double alpha) {
  DepthMix m;
  m.d = mix_depth(d_gt, d_est, alpha);
  m.d_gt = std::move(d_gt);
  m.d_est = std::move(d_est);
  m.alpha = alpha;
  return m;
}

}  // namespace scenecomp
