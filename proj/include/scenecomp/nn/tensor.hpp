#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "scenecomp/common.hpp"
#include "scenecomp/rng.hpp"

namespace scenecomp::nn {

// Dense row-major tensor. Shapes are lightweight metadata over a flat buffer;
// most ops treat tensors as matrices (rows = all leading dims, cols = last).
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    SC_CHECK(static_cast<int64_t>(data.size()) == numel_of(shape), "tensor data/shape mismatch");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }

  int64_t rows() const {
    SC_CHECK(!shape.empty(), "rank-0 tensor has no rows");
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
  }
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  T at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  Tensor reshaped(std::vector<int64_t> s) const {
    SC_CHECK(numel_of(s) == numel(), "reshape changes element count");
    return Tensor(std::move(s), data);
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor randn(RngStream& rng, std::vector<int64_t> s, T stddev = T(1)) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Round every element through float32. Keeps parameters exactly
  // representable in the float32 checkpoint encoding.
  void round_to_f32() {
    for (auto& v : data) v = static_cast<T>(static_cast<float>(v));
  }
};

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<EigenRowMat<T>>;
template <class T>
using MapConstMat = Eigen::Map<const EigenRowMat<T>>;

// C (+)= A * B with optional transposes on either operand.
template <class T>
void gemm(const T* a, int64_t am, int64_t an, bool ta, const T* b, int64_t bm, int64_t bn,
          bool tb, T* c, bool accumulate) {
  int64_t m = ta ? an : am, k = ta ? am : an;
  int64_t k2 = tb ? bn : bm, n = tb ? bm : bn;
  SC_CHECK(k == k2, "gemm inner dims mismatch");
  MapConstMat<T> A(a, am, an), B(b, bm, bn);
  MapMat<T> C(c, m, n);
  if (!ta && !tb) {
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (ta && !tb) {
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else if (!ta && tb) {
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
}

template <class T>
Tensor<T> matmul_plain(const Tensor<T>& a, const Tensor<T>& b) {
  SC_CHECK(a.cols() == b.rows(), "matmul dims");
  Tensor<T> out({a.rows(), b.cols()});
  gemm(a.data.data(), a.rows(), a.cols(), false, b.data.data(), b.rows(), b.cols(), false,
       out.data.data(), false);
  return out;
}

}  // namespace scenecomp::nn
