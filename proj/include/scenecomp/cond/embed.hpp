#pragma once

#include <vector>

#include "scenecomp/common.hpp"

namespace scenecomp {

inline constexpr int kRatioEmbedDim = 32;  // 16 geometric frequencies

// Interleaved sin/cos at geometric frequencies. The lowest frequency is 1,
// so the first component is strictly monotone on [0,1] and the embedding is
// injective there; the norm is bounded by sqrt(dim).
inline std::vector<double> sinusoidal_embed(double value, int dim = kRatioEmbedDim) {
  SC_CHECK(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
  int freqs = dim / 2;
  std::vector<double> out(dim);
  double w = 1.0;
  double ratio = freqs > 1 ? std::pow(1000.0, 1.0 / (freqs - 1)) : 1.0;
  for (int k = 0; k < freqs; ++k) {
    out[2 * k] = std::sin(w * value);
    out[2 * k + 1] = std::cos(w * value);
    w *= ratio;
  }
  return out;
}

struct RatioEmbedding {
  double value = 0.0;
  std::vector<double> embedding;

  static RatioEmbedding of(double value, int dim = kRatioEmbedDim) {
    SC_CHECK(value >= 0.0 && value <= 1.0, "ratio must lie in [0,1]");
    return {value, sinusoidal_embed(value, dim)};
  }
};

}  // namespace scenecomp
