#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "scenecomp/nn/graph.hpp"
#include "scenecomp/sha256.hpp"

namespace scenecomp::nn {

// Owns every Param of a model. Pointers stay stable (deque storage), names
// are unique and double as the checkpoint keys.
template <class T>
class ParamRegistry {
 public:
  Param<T>& create(const std::string& name, const std::string& group,
                   std::vector<int64_t> shape, RngStream& rng, double stddev) {
    for (auto& p : params_) SC_CHECK(p.name != name, "duplicate param name: " + name);
    Param<T> p;
    p.name = name;
    p.group = group;
    p.w = stddev == 0.0 ? Tensor<T>::zeros(shape) : Tensor<T>::randn(rng, shape, T(stddev));
    p.w.round_to_f32();
    p.g = Tensor<T>::zeros(shape);
    p.m = Tensor<T>::zeros(shape);
    p.v = Tensor<T>::zeros(shape);
    params_.push_back(std::move(p));
    return params_.back();
  }

  std::deque<Param<T>>& params() { return params_; }
  const std::deque<Param<T>>& params() const { return params_; }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.w.numel();
    return n;
  }

  // Checksum over the f32 encoding of all weights, in registration order.
  std::string checksum(const std::string& group = "") const {
    Sha256 h;
    for (const auto& p : params_) {
      if (!group.empty() && p.group != group) continue;
      h.update(p.name.data(), p.name.size());
      for (T x : p.w.data) {
        float f = static_cast<float>(x);
        h.update(&f, sizeof(f));
      }
    }
    Sha256 copy = h;
    return Sha256::to_hex(copy.finish());
  }

 private:
  std::deque<Param<T>> params_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  int warmup_steps = 20;
  int total_steps = 1000;   // cosine decay horizon
  double min_lr_frac = 0.1;
};

// Decoupled-weight-decay Adam with global grad-norm clipping, linear warmup
// and cosine decay. Weights are re-rounded through float32 after every step
// so a checkpoint round-trip is lossless.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  double current_lr() const {
    double base = cfg_.lr;
    if (step_ < cfg_.warmup_steps) return base * (step_ + 1) / double(cfg_.warmup_steps);
    double t = double(step_ - cfg_.warmup_steps) /
               std::max(1.0, double(cfg_.total_steps - cfg_.warmup_steps));
    t = std::min(1.0, t);
    double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
    return base * (cfg_.min_lr_frac + (1.0 - cfg_.min_lr_frac) * cosine);
  }

  // Updates params whose group is in `groups`; empty set means all.
  void step(ParamRegistry<T>& reg, const std::vector<std::string>& groups = {}) {
    auto trainable = [&](const Param<T>& p) {
      if (groups.empty()) return true;
      for (const auto& g : groups)
        if (p.group == g) return true;
      return false;
    };
    double sq = 0;
    for (auto& p : reg.params())
      if (trainable(p))
        for (T g : p.g.data) sq += double(g) * double(g);
    double norm = std::sqrt(sq);
    double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

    double lr = current_lr();
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (auto& p : reg.params()) {
      if (!trainable(p)) continue;
      for (int64_t i = 0; i < p.w.numel(); ++i) {
        double g = double(p.g.data[i]) * clip;
        double m = cfg_.beta1 * double(p.m.data[i]) + (1 - cfg_.beta1) * g;
        double v = cfg_.beta2 * double(p.v.data[i]) + (1 - cfg_.beta2) * g * g;
        p.m.data[i] = static_cast<T>(m);
        p.v.data[i] = static_cast<T>(v);
        double mh = m / bc1, vh = v / bc2;
        double w = double(p.w.data[i]);
        w -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * w);
        p.w.data[i] = static_cast<T>(w);
      }
      p.w.round_to_f32();
    }
  }

  int steps_taken() const { return step_; }

 private:
  AdamWConfig cfg_;
  int step_ = 0;
};

// Dense layer y = x W + b.
template <class T>
struct Linear {
  Param<T>* w = nullptr;
  Param<T>* b = nullptr;

  Linear() = default;
  // stddev < 0 selects the default 1/sqrt(fan_in); 0 zero-initializes.
  Linear(ParamRegistry<T>& reg, const std::string& name, const std::string& group,
         int64_t in, int64_t out, RngStream& rng, double stddev = -1.0) {
    if (stddev < 0) stddev = 1.0 / std::sqrt(double(in));
    w = &reg.create(name + ".w", group, {in, out}, rng, stddev);
    b = &reg.create(name + ".b", group, {out}, rng, 0.0);
  }

  typename Tape<T>::Ref forward(Tape<T>& tape, typename Tape<T>::Ref x) const {
    return tape.add_rowvec(tape.matmul(x, tape.param(*w)), tape.param(*b));
  }
};

// Two-layer MLP with GELU.
template <class T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(ParamRegistry<T>& reg, const std::string& name, const std::string& group, int64_t dim,
      int64_t hidden, RngStream& rng)
      : fc1(reg, name + ".fc1", group, dim, hidden, rng),
        fc2(reg, name + ".fc2", group, hidden, dim, rng) {}

  typename Tape<T>::Ref forward(Tape<T>& tape, typename Tape<T>::Ref x) const {
    return fc2.forward(tape, tape.gelu(fc1.forward(tape, x)));
  }
};

}  // namespace scenecomp::nn
