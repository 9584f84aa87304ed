#pragma once

#include <vector>

#include "scenecomp/nn/tensor.hpp"

namespace scenecomp {

// Rectified-flow interpolant: z_t = (1-t) z0 + t eps with velocity target
// eps - z0. Both endpoints are exact.
template <class T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> flow_interpolate(const nn::Tensor<T>& z0,
                                                         const nn::Tensor<T>& eps, double t) {
  SC_CHECK(z0.shape == eps.shape, "interpolant shape mismatch");
  SC_CHECK(t >= 0.0 && t <= 1.0, "t must lie in [0,1]");
  nn::Tensor<T> z_t(z0.shape);
  nn::Tensor<T> target(z0.shape);
  for (int64_t i = 0; i < z0.numel(); ++i) {
    z_t.data[i] = static_cast<T>((1.0 - t) * z0.data[i] + t * eps.data[i]);
    target.data[i] = eps.data[i] - z0.data[i];
  }
  return {std::move(z_t), std::move(target)};
}

template <class T>
double fm_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target) {
  SC_CHECK(pred.shape == target.shape, "loss shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    double d = double(pred.data[i]) - double(target.data[i]);
    s += d * d;
  }
  return s / pred.numel();
}

// Negated mean cosine similarity between matching per-token rows, averaged
// over the layer list. Zero-norm tokens contribute 0. Result lies in [-1,1].
template <class T>
double orfa_loss(const std::vector<nn::Tensor<T>>& student,
                 const std::vector<nn::Tensor<T>>& teacher) {
  SC_CHECK(!student.empty() && student.size() == teacher.size(),
           "feature lists must match in length");
  double layer_sum = 0;
  for (size_t n = 0; n < student.size(); ++n) {
    const auto& s = student[n];
    const auto& h = teacher[n];
    SC_CHECK(s.shape == h.shape, "feature shape mismatch at layer " + std::to_string(n));
    int64_t rows = s.rows(), cols = s.cols();
    double row_sum = 0;
    for (int64_t i = 0; i < rows; ++i) {
      double na = 0, nb = 0, dot = 0;
      for (int64_t j = 0; j < cols; ++j) {
        double x = s.data[i * cols + j], z = h.data[i * cols + j];
        na += x * x;
        nb += z * z;
        dot += x * z;
      }
      if (na > 0 && nb > 0) row_sum += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    layer_sum += row_sum / rows;
  }
  return -layer_sum / static_cast<double>(student.size());
}

// v_uncond + scale * (v_cond - v_uncond); the endpoints return the inputs
// bit-exactly.
template <class T>
nn::Tensor<T> cfg_combine(const nn::Tensor<T>& v_uncond, const nn::Tensor<T>& v_cond,
                          double scale) {
  SC_CHECK(v_uncond.shape == v_cond.shape, "cfg shape mismatch");
  if (scale == 1.0) return v_cond;
  if (scale == 0.0) return v_uncond;
  nn::Tensor<T> out(v_uncond.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] =
        static_cast<T>(v_uncond.data[i] + scale * (v_cond.data[i] - v_uncond.data[i]));
  return out;
}

struct LossReport {
  double l_fm = 0;
  double l_al = 0;
  double lambda = 0;
  double total = 0;
  double learning_rate = 0;
};

}  // namespace scenecomp
