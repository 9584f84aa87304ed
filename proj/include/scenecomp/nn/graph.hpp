#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scenecomp/nn/tensor.hpp"

namespace scenecomp::nn {

// Named trainable parameter with gradient and AdamW moment buffers.
template <class T>
struct Param {
  std::string name;
  std::string group;   // "base" or "control"; freezing works per group
  Tensor<T> w;
  Tensor<T> g;
  Tensor<T> m, v;      // AdamW moments

  void zero_grad() { std::fill(g.data.begin(), g.data.end(), T(0)); }
};

// Reverse-mode tape. Ops append nodes; backward() walks the tape in reverse,
// accumulating into input grads and flushing leaf grads into bound Params.
// Node values are freed as soon as their own backprop has run, so read any
// forward value you need before calling backward().
template <class T>
class Tape {
 public:
  using Ref = int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Ref constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  Ref param(Param<T>& p) {
    Ref r = push(p.w, true, &p);
    return r;
  }

  const Tensor<T>& value(Ref r) const { return nodes_[r].value; }
  Tensor<T> value_copy(Ref r) const { return nodes_[r].value; }
  bool requires_grad(Ref r) const { return nodes_[r].requires_grad; }

  // The gradient buffer, lazily zero-initialized to the node's value shape.
  Tensor<T>& grad_buf(Ref r) {
    Node& n = nodes_[r];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  void backward(Ref loss) {
    SC_CHECK(nodes_[loss].value.numel() == 1, "backward needs a scalar loss");
    grad_buf(loss).data[0] = T(1);
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && !n.grad.empty()) {
        if (n.backprop) n.backprop();
        if (n.bound) {
          auto& pg = n.bound->g;
          for (int64_t e = 0; e < n.grad.numel(); ++e) pg.data[e] += n.grad.data[e];
        }
      }
      n.value = Tensor<T>();
      n.grad = Tensor<T>();
      n.backprop = nullptr;
    }
  }

  // ---- elementwise ----

  Ref add(Ref a, Ref b) {
    check_same_shape(a, b);
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    return unary_binary(std::move(out), a, b, [this](Ref y, Ref a2, Ref b2) {
      const auto& g = nodes_[y].grad;
      if (requires_grad(a2)) accumulate(a2, g);
      if (requires_grad(b2)) accumulate(b2, g);
    });
  }

  Ref sub(Ref a, Ref b) {
    check_same_shape(a, b);
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
    return unary_binary(std::move(out), a, b, [this](Ref y, Ref a2, Ref b2) {
      const auto& g = nodes_[y].grad;
      if (requires_grad(a2)) accumulate(a2, g);
      if (requires_grad(b2)) {
        auto& gb = grad_buf(b2);
        for (int64_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
      }
    });
  }

  Ref mul(Ref a, Ref b) {
    check_same_shape(a, b);
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    Ref y = push_op(std::move(out), {a, b});
    nodes_[y].backprop = [this, y, a, b] {
      const auto& g = nodes_[y].grad;
      const auto& av = nodes_[a].value;
      const auto& bv2 = nodes_[b].value;
      if (requires_grad(a)) {
        auto& ga = grad_buf(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * bv2.data[i];
      }
      if (requires_grad(b)) {
        auto& gb = grad_buf(b);
        for (int64_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * av.data[i];
      }
    };
    return y;
  }

  Ref scale(Ref a, T s) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v *= s;
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a, s] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      auto& ga = grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] += s * g.data[i];
    };
    return y;
  }

  Ref add_const(Ref a, T c) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v += c;
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a] {
      if (requires_grad(a)) accumulate(a, nodes_[y].grad);
    };
    return y;
  }

  Ref reshape(Ref a, std::vector<int64_t> shape) {
    Tensor<T> out = nodes_[a].value.reshaped(std::move(shape));
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a] {
      if (requires_grad(a)) accumulate(a, nodes_[y].grad);
    };
    return y;
  }

  // ---- matrix ops ----

  Ref matmul(Ref a, Ref b) {
    const auto& av = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    Tensor<T> out({av.rows(), bv.cols()});
    gemm(av.data.data(), av.rows(), av.cols(), false, bv.data.data(), bv.rows(), bv.cols(),
         false, out.data.data(), false);
    Ref y = push_op(std::move(out), {a, b});
    nodes_[y].backprop = [this, y, a, b] {
      const auto& g = nodes_[y].grad;
      const auto& av2 = nodes_[a].value;
      const auto& bv2 = nodes_[b].value;
      if (requires_grad(a)) {
        auto& ga = grad_buf(a);
        gemm(g.data.data(), g.rows(), g.cols(), false, bv2.data.data(), bv2.rows(), bv2.cols(),
             true, ga.data.data(), true);
      }
      if (requires_grad(b)) {
        auto& gb = grad_buf(b);
        gemm(av2.data.data(), av2.rows(), av2.cols(), true, g.data.data(), g.rows(), g.cols(),
             false, gb.data.data(), true);
      }
    };
    return y;
  }

  // y = x + row vector bias (bias has x.cols() entries).
  Ref add_rowvec(Ref x, Ref bias) {
    const auto& xv = nodes_[x].value;
    const auto& bv = nodes_[bias].value;
    SC_CHECK(bv.numel() == xv.cols(), "bias size mismatch");
    Tensor<T> out = xv;
    int64_t r = xv.rows(), c = xv.cols();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[i * c + j] += bv.data[j];
    Ref y = push_op(std::move(out), {x, bias});
    nodes_[y].backprop = [this, y, x, bias] {
      const auto& g = nodes_[y].grad;
      int64_t r2 = g.rows(), c2 = g.cols();
      if (requires_grad(x)) accumulate(x, g);
      if (requires_grad(bias)) {
        auto& gb = grad_buf(bias);
        for (int64_t i = 0; i < r2; ++i)
          for (int64_t j = 0; j < c2; ++j) gb.data[j] += g.data[i * c2 + j];
      }
    };
    return y;
  }

  Ref slice_rows(Ref a, int64_t r0, int64_t r1) {
    const auto& av = nodes_[a].value;
    int64_t c = av.cols();
    SC_CHECK(r0 >= 0 && r1 <= av.rows() && r0 < r1, "row slice out of range");
    Tensor<T> out({r1 - r0, c});
    std::copy(av.data.begin() + r0 * c, av.data.begin() + r1 * c, out.data.begin());
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a, r0] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      auto& ga = grad_buf(a);
      int64_t c2 = g.cols();
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < c2; ++j) ga.data[(r0 + i) * c2 + j] += g.data[i * c2 + j];
    };
    return y;
  }

  Ref slice_cols(Ref a, int64_t c0, int64_t c1) {
    const auto& av = nodes_[a].value;
    int64_t r = av.rows(), c = av.cols();
    SC_CHECK(c0 >= 0 && c1 <= c && c0 < c1, "col slice out of range");
    Tensor<T> out({r, c1 - c0});
    for (int64_t i = 0; i < r; ++i)
      std::copy(av.data.begin() + i * c + c0, av.data.begin() + i * c + c1,
                out.data.begin() + i * (c1 - c0));
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a, c0, c] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      auto& ga = grad_buf(a);
      int64_t w = g.cols();
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < w; ++j) ga.data[i * c + c0 + j] += g.data[i * w + j];
    };
    return y;
  }

  Ref concat_rows(const std::vector<Ref>& parts) {
    SC_CHECK(!parts.empty(), "concat of nothing");
    int64_t c = nodes_[parts[0]].value.cols(), r = 0;
    for (Ref p : parts) {
      SC_CHECK(nodes_[p].value.cols() == c, "concat col mismatch");
      r += nodes_[p].value.rows();
    }
    Tensor<T> out({r, c});
    int64_t off = 0;
    for (Ref p : parts) {
      const auto& pv = nodes_[p].value;
      std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off);
      off += pv.numel();
    }
    Ref y = push_op(std::move(out), parts);
    auto parts_copy = parts;
    nodes_[y].backprop = [this, y, parts_copy] {
      const auto& g = nodes_[y].grad;
      int64_t off2 = 0;
      for (Ref p : parts_copy) {
        int64_t n = nodes_[p].value.numel();
        if (requires_grad(p)) {
          auto& gp = grad_buf(p);
          for (int64_t i = 0; i < n; ++i) gp.data[i] += g.data[off2 + i];
        }
        off2 += n;
      }
    };
    return y;
  }

  // y[i] = x[map[i]]; used for patchify/unpatchify permutations.
  Ref gather(Ref a, std::shared_ptr<const std::vector<int64_t>> map,
             std::vector<int64_t> out_shape) {
    const auto& av = nodes_[a].value;
    Tensor<T> out(std::move(out_shape));
    SC_CHECK(out.numel() == static_cast<int64_t>(map->size()), "gather map size mismatch");
    for (size_t i = 0; i < map->size(); ++i) out.data[i] = av.data[(*map)[i]];
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a, map] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      auto& ga = grad_buf(a);
      for (size_t i = 0; i < map->size(); ++i) ga.data[(*map)[i]] += g.data[i];
    };
    return y;
  }

  // ---- broadcast ops over samples: x is (B*L) x D ----

  Ref add_bcast_rows(Ref x, Ref s, int64_t tokens_per_sample) {
    const auto& xv = nodes_[x].value;
    const auto& sv = nodes_[s].value;
    int64_t d = xv.cols(), b = sv.rows();
    SC_CHECK(sv.cols() == d && xv.rows() == b * tokens_per_sample, "broadcast shape mismatch");
    Tensor<T> out = xv;
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t l = 0; l < tokens_per_sample; ++l)
        for (int64_t j = 0; j < d; ++j)
          out.data[(bi * tokens_per_sample + l) * d + j] += sv.data[bi * d + j];
    Ref y = push_op(std::move(out), {x, s});
    nodes_[y].backprop = [this, y, x, s, tokens_per_sample] {
      const auto& g = nodes_[y].grad;
      int64_t d2 = g.cols();
      int64_t b2 = nodes_[s].value.rows();
      if (requires_grad(x)) accumulate(x, g);
      if (requires_grad(s)) {
        auto& gs = grad_buf(s);
        for (int64_t bi = 0; bi < b2; ++bi)
          for (int64_t l = 0; l < tokens_per_sample; ++l)
            for (int64_t j = 0; j < d2; ++j)
              gs.data[bi * d2 + j] += g.data[(bi * tokens_per_sample + l) * d2 + j];
      }
    };
    return y;
  }

  Ref mul_bcast_rows(Ref x, Ref s, int64_t tokens_per_sample) {
    const auto& xv = nodes_[x].value;
    const auto& sv = nodes_[s].value;
    int64_t d = xv.cols(), b = sv.rows();
    SC_CHECK(sv.cols() == d && xv.rows() == b * tokens_per_sample, "broadcast shape mismatch");
    Tensor<T> out = xv;
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t l = 0; l < tokens_per_sample; ++l)
        for (int64_t j = 0; j < d; ++j)
          out.data[(bi * tokens_per_sample + l) * d + j] *= sv.data[bi * d + j];
    Ref y = push_op(std::move(out), {x, s});
    nodes_[y].backprop = [this, y, x, s, tokens_per_sample] {
      const auto& g = nodes_[y].grad;
      const auto& xv2 = nodes_[x].value;
      const auto& sv2 = nodes_[s].value;
      int64_t d2 = g.cols();
      int64_t b2 = sv2.rows();
      if (requires_grad(x)) {
        auto& gx = grad_buf(x);
        for (int64_t bi = 0; bi < b2; ++bi)
          for (int64_t l = 0; l < tokens_per_sample; ++l)
            for (int64_t j = 0; j < d2; ++j) {
              int64_t i = (bi * tokens_per_sample + l) * d2 + j;
              gx.data[i] += g.data[i] * sv2.data[bi * d2 + j];
            }
      }
      if (requires_grad(s)) {
        auto& gs = grad_buf(s);
        for (int64_t bi = 0; bi < b2; ++bi)
          for (int64_t l = 0; l < tokens_per_sample; ++l)
            for (int64_t j = 0; j < d2; ++j) {
              int64_t i = (bi * tokens_per_sample + l) * d2 + j;
              gs.data[bi * d2 + j] += g.data[i] * xv2.data[i];
            }
      }
    };
    return y;
  }

  // x is (B*L) x D, p is L x D tiled across the B samples.
  Ref add_tile_rows(Ref x, Ref p) {
    const auto& xv = nodes_[x].value;
    const auto& pv = nodes_[p].value;
    int64_t d = xv.cols(), l = pv.rows();
    SC_CHECK(pv.cols() == d && xv.rows() % l == 0, "tile shape mismatch");
    int64_t b = xv.rows() / l;
    Tensor<T> out = xv;
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t li = 0; li < l; ++li)
        for (int64_t j = 0; j < d; ++j)
          out.data[(bi * l + li) * d + j] += pv.data[li * d + j];
    Ref y = push_op(std::move(out), {x, p});
    nodes_[y].backprop = [this, y, x, p, l, b] {
      const auto& g = nodes_[y].grad;
      int64_t d2 = g.cols();
      if (requires_grad(x)) accumulate(x, g);
      if (requires_grad(p)) {
        auto& gp = grad_buf(p);
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t li = 0; li < l; ++li)
            for (int64_t j = 0; j < d2; ++j)
              gp.data[li * d2 + j] += g.data[(bi * l + li) * d2 + j];
      }
    };
    return y;
  }

  // ---- nonlinearities ----

  Ref gelu(Ref a) {
    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    const auto& av = nodes_[a].value;
    Tensor<T> out = av;
    for (auto& v : out.data) {
      double x = static_cast<double>(v);
      v = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)));
    }
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      const auto& av2 = nodes_[a].value;
      auto& ga = grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) {
        double x = static_cast<double>(av2.data[i]);
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga.data[i] += g.data[i] * static_cast<T>(phi + x * pdf);
      }
    };
    return y;
  }

  Ref silu(Ref a) {
    const auto& av = nodes_[a].value;
    Tensor<T> out = av;
    for (auto& v : out.data) {
      double x = static_cast<double>(v);
      v = static_cast<T>(x / (1.0 + std::exp(-x)));
    }
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      const auto& av2 = nodes_[a].value;
      auto& ga = grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) {
        double x = static_cast<double>(av2.data[i]);
        double s = 1.0 / (1.0 + std::exp(-x));
        ga.data[i] += g.data[i] * static_cast<T>(s * (1.0 + x * (1.0 - s)));
      }
    };
    return y;
  }

  // Row-wise layer norm, no affine part.
  Ref layernorm_rows(Ref a, double eps = 1e-6) {
    const auto& av = nodes_[a].value;
    int64_t r = av.rows(), c = av.cols();
    Tensor<T> out({r, c});
    auto inv_sigma = std::make_shared<std::vector<double>>(r);
    for (int64_t i = 0; i < r; ++i) {
      double mu = 0;
      for (int64_t j = 0; j < c; ++j) mu += av.data[i * c + j];
      mu /= c;
      double var = 0;
      for (int64_t j = 0; j < c; ++j) {
        double d = av.data[i * c + j] - mu;
        var += d * d;
      }
      var /= c;
      double inv = 1.0 / std::sqrt(var + eps);
      (*inv_sigma)[i] = inv;
      for (int64_t j = 0; j < c; ++j)
        out.data[i * c + j] = static_cast<T>((av.data[i * c + j] - mu) * inv);
    }
    Ref y = push_op(std::move(out), {a});
    nodes_[y].backprop = [this, y, a, inv_sigma] {
      if (!requires_grad(a)) return;
      const auto& g = nodes_[y].grad;
      const auto& yv = nodes_[y].value;
      auto& ga = grad_buf(a);
      int64_t r2 = g.rows(), c2 = g.cols();
      for (int64_t i = 0; i < r2; ++i) {
        double gmean = 0, gymean = 0;
        for (int64_t j = 0; j < c2; ++j) {
          gmean += g.data[i * c2 + j];
          gymean += g.data[i * c2 + j] * yv.data[i * c2 + j];
        }
        gmean /= c2;
        gymean /= c2;
        double inv = (*inv_sigma)[i];
        for (int64_t j = 0; j < c2; ++j)
          ga.data[i * c2 + j] += static_cast<T>(
              inv * (g.data[i * c2 + j] - gmean - yv.data[i * c2 + j] * gymean));
      }
    };
    return y;
  }

  // Fused multi-head attention. q is (B*Lq) x W, k and v are (B*Lk) x W.
  // Softmax probabilities are kept for the backward pass and released after.
  Ref attention(Ref q, Ref k, Ref v, int64_t batch, int64_t heads) {
    const auto& qv = nodes_[q].value;
    const auto& kv = nodes_[k].value;
    const auto& vv = nodes_[v].value;
    int64_t w = qv.cols();
    SC_CHECK(kv.cols() == w && vv.cols() == w, "attention width mismatch");
    SC_CHECK(w % heads == 0, "width must divide heads");
    int64_t lq = qv.rows() / batch, lk = kv.rows() / batch;
    SC_CHECK(qv.rows() == batch * lq && kv.rows() == batch * lk && vv.rows() == batch * lk,
             "attention batch mismatch");
    int64_t dh = w / heads;
    double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    auto probs = std::make_shared<std::vector<T>>(size_t(batch) * heads * lq * lk);
    Tensor<T> out({batch * lq, w});

    using Stride = Eigen::OuterStride<>;
    using SMap = Eigen::Map<EigenRowMat<T>, 0, Stride>;
    using SCMap = Eigen::Map<const EigenRowMat<T>, 0, Stride>;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t h = 0; h < heads; ++h) {
        SCMap Q(qv.data.data() + (b * lq) * w + h * dh, lq, dh, Stride(w));
        SCMap K(kv.data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
        SCMap V(vv.data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
        T* pp = probs->data() + ((b * heads + h) * lq * lk);
        MapMat<T> P(pp, lq, lk);
        P.noalias() = Q * K.transpose();
        for (int64_t i = 0; i < lq; ++i) {
          T* row = pp + i * lk;
          double mx = -1e300;
          for (int64_t j = 0; j < lk; ++j) mx = std::max(mx, double(row[j]) * scale_f);
          double sum = 0;
          for (int64_t j = 0; j < lk; ++j) {
            double e = std::exp(double(row[j]) * scale_f - mx);
            row[j] = static_cast<T>(e);
            sum += e;
          }
          double inv = 1.0 / sum;
          for (int64_t j = 0; j < lk; ++j) row[j] = static_cast<T>(double(row[j]) * inv);
        }
        SMap O(out.data.data() + (b * lq) * w + h * dh, lq, dh, Stride(w));
        O.noalias() = MapConstMat<T>(pp, lq, lk) * V;
      }
    }
    Ref y = push_op(std::move(out), {q, k, v});
    nodes_[y].backprop = [this, y, q, k, v, batch, heads, lq, lk, dh, w, scale_f, probs]() mutable {
      const auto& g = nodes_[y].grad;
      const auto& qv2 = nodes_[q].value;
      const auto& kv2 = nodes_[k].value;
      const auto& vv2 = nodes_[v].value;
      bool nq = requires_grad(q), nk = requires_grad(k), nv = requires_grad(v);
      Tensor<T>* gq = nq ? &grad_buf(q) : nullptr;
      Tensor<T>* gk = nk ? &grad_buf(k) : nullptr;
      Tensor<T>* gv = nv ? &grad_buf(v) : nullptr;
      EigenRowMat<T> dP(lq, lk), dS(lq, lk);
      using Stride = Eigen::OuterStride<>;
      using SMap = Eigen::Map<EigenRowMat<T>, 0, Stride>;
      using SCMap = Eigen::Map<const EigenRowMat<T>, 0, Stride>;
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
          const T* pp = probs->data() + ((b * heads + h) * lq * lk);
          MapConstMat<T> P(pp, lq, lk);
          SCMap dO(g.data.data() + (b * lq) * w + h * dh, lq, dh, Stride(w));
          SCMap Q(qv2.data.data() + (b * lq) * w + h * dh, lq, dh, Stride(w));
          SCMap K(kv2.data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
          SCMap V(vv2.data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
          if (nv) {
            SMap gVm(gv->data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
            gVm.noalias() += P.transpose() * dO;
          }
          if (nq || nk) {
            dP.noalias() = dO * V.transpose();
            for (int64_t i = 0; i < lq; ++i) {
              double dot = 0;
              for (int64_t j = 0; j < lk; ++j) dot += double(dP(i, j)) * double(P(i, j));
              for (int64_t j = 0; j < lk; ++j)
                dS(i, j) = static_cast<T>((double(dP(i, j)) - dot) * double(P(i, j)) * scale_f);
            }
            if (nq) {
              SMap gQm(gq->data.data() + (b * lq) * w + h * dh, lq, dh, Stride(w));
              gQm.noalias() += dS * K;
            }
            if (nk) {
              SMap gKm(gk->data.data() + (b * lk) * w + h * dh, lk, dh, Stride(w));
              gKm.noalias() += dS.transpose() * Q;
            }
          }
        }
      }
      probs.reset();
    };
    return y;
  }

  // ---- reductions / losses ----

  Ref mean_all(Ref a) {
    const auto& av = nodes_[a].value;
    double s = 0;
    for (T x : av.data) s += static_cast<double>(x);
    Ref y = push_op(Tensor<T>::scalar(static_cast<T>(s / av.numel())), {a});
    nodes_[y].backprop = [this, y, a] {
      if (!requires_grad(a)) return;
      T g = nodes_[y].grad.data[0];
      auto& ga = grad_buf(a);
      T inv = g / static_cast<T>(ga.numel());
      for (auto& v : ga.data) v += inv;
    };
    return y;
  }

  Ref mse(Ref a, Ref b) {
    check_same_shape(a, b);
    const auto& av = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    double s = 0;
    for (int64_t i = 0; i < av.numel(); ++i) {
      double d = static_cast<double>(av.data[i]) - static_cast<double>(bv.data[i]);
      s += d * d;
    }
    Ref y = push_op(Tensor<T>::scalar(static_cast<T>(s / av.numel())), {a, b});
    nodes_[y].backprop = [this, y, a, b] {
      T g = nodes_[y].grad.data[0];
      const auto& av2 = nodes_[a].value;
      const auto& bv2 = nodes_[b].value;
      T inv = g * T(2) / static_cast<T>(av2.numel());
      if (requires_grad(a)) {
        auto& ga = grad_buf(a);
        for (int64_t i = 0; i < av2.numel(); ++i)
          ga.data[i] += inv * (av2.data[i] - bv2.data[i]);
      }
      if (requires_grad(b)) {
        auto& gb = grad_buf(b);
        for (int64_t i = 0; i < av2.numel(); ++i)
          gb.data[i] += inv * (bv2.data[i] - av2.data[i]);
      }
    };
    return y;
  }

  // Mean over rows of the cosine similarity between matching rows of a and b.
  // A zero-norm row on either side contributes 0 with zero gradient.
  Ref cosine_rows_mean(Ref a, Ref b) {
    check_same_shape(a, b);
    const auto& av = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    int64_t r = av.rows(), c = av.cols();
    double total = 0;
    for (int64_t i = 0; i < r; ++i) {
      double na = 0, nb = 0, dot = 0;
      for (int64_t j = 0; j < c; ++j) {
        double x = av.data[i * c + j], z = bv.data[i * c + j];
        na += x * x;
        nb += z * z;
        dot += x * z;
      }
      if (na > 0 && nb > 0) total += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    Ref y = push_op(Tensor<T>::scalar(static_cast<T>(total / r)), {a, b});
    nodes_[y].backprop = [this, y, a, b] {
      double g = static_cast<double>(nodes_[y].grad.data[0]);
      const auto& av2 = nodes_[a].value;
      const auto& bv2 = nodes_[b].value;
      int64_t r2 = av2.rows(), c2 = av2.cols();
      double inv_r = 1.0 / r2;
      bool na_grad = requires_grad(a), nb_grad = requires_grad(b);
      Tensor<T>* ga = na_grad ? &grad_buf(a) : nullptr;
      Tensor<T>* gb = nb_grad ? &grad_buf(b) : nullptr;
      for (int64_t i = 0; i < r2; ++i) {
        double na = 0, nb = 0, dot = 0;
        for (int64_t j = 0; j < c2; ++j) {
          double x = av2.data[i * c2 + j], z = bv2.data[i * c2 + j];
          na += x * x;
          nb += z * z;
          dot += x * z;
        }
        if (na <= 0 || nb <= 0) continue;
        double sa = std::sqrt(na), sb = std::sqrt(nb);
        double cosv = dot / (sa * sb);
        for (int64_t j = 0; j < c2; ++j) {
          double x = av2.data[i * c2 + j], z = bv2.data[i * c2 + j];
          if (na_grad)
            ga->data[i * c2 + j] +=
                static_cast<T>(g * inv_r * (z / (sa * sb) - cosv * x / na));
          if (nb_grad)
            gb->data[i * c2 + j] +=
                static_cast<T>(g * inv_r * (x / (sa * sb) - cosv * z / nb));
        }
      }
    };
    return y;
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backprop;
    Param<T>* bound = nullptr;
    bool requires_grad = false;
  };

  void check_same_shape(Ref a, Ref b) const {
    SC_CHECK(nodes_[a].value.shape == nodes_[b].value.shape, "shape mismatch");
  }

  void accumulate(Ref r, const Tensor<T>& g) {
    auto& buf = grad_buf(r);
    for (int64_t i = 0; i < g.numel(); ++i) buf.data[i] += g.data[i];
  }

  Ref push(Tensor<T> v, bool rg, Param<T>* bound) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), nullptr, bound, rg});
    return static_cast<Ref>(nodes_.size() - 1);
  }

  Ref push_op(Tensor<T> v, const std::vector<Ref>& inputs) {
    bool rg = false;
    for (Ref i : inputs) rg = rg || nodes_[i].requires_grad;
    return push(std::move(v), rg, nullptr);
  }

  template <class F>
  Ref unary_binary(Tensor<T> v, Ref a, Ref b, F&& fn) {
    Ref y = push_op(std::move(v), {a, b});
    nodes_[y].backprop = [fn = std::forward<F>(fn), y, a, b] { fn(y, a, b); };
    return y;
  }

  std::vector<Node> nodes_;
};

}  // namespace scenecomp::nn
