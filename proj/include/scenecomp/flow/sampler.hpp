#pragma once

#include "scenecomp/flow/model.hpp"

namespace scenecomp {

struct SampleOptions {
  int steps = 25;
  double cfg_scale = 5.0;
};

// Euler integration of the learned velocity field from t=1 (noise) to t=0
// with uniform steps, applying classifier-free guidance at every step.
// Deterministic given the rng seed.
template <class T>
nn::Tensor<T> sample(const DualBranchModel<T>& model, const ConditionBundle& cond,
                     const SampleOptions& opt, RngStream& rng) {
  SC_CHECK(opt.steps >= 1, "need at least one step");
  const ModelConfig& cfg = model.config();
  const int64_t n = cfg.grid_numel();
  nn::Tensor<T> z = nn::Tensor<T>::randn(rng, {1, n});

  ConditionBundle null_cond;
  null_cond.null_flag = true;

  const double dt = 1.0 / opt.steps;
  for (int k = 0; k < opt.steps; ++k) {
    double t = 1.0 - k * dt;
    auto velocity = [&](const ConditionBundle& c) {
      ForwardInput<T> in = model.assemble({&c}, {t}, z);
      nn::Tape<T> tape;
      auto out = model.forward(tape, in, model.with_control(), false);
      return tape.value_copy(out.velocity);
    };
    nn::Tensor<T> v;
    if (opt.cfg_scale == 1.0) {
      v = velocity(cond);
    } else if (opt.cfg_scale == 0.0) {
      v = velocity(null_cond);
    } else {
      nn::Tensor<T> v_cond = velocity(cond);
      nn::Tensor<T> v_uncond = velocity(null_cond);
      v = cfg_combine(v_uncond, v_cond, opt.cfg_scale);
    }
    for (int64_t i = 0; i < n; ++i) z.data[i] -= static_cast<T>(dt) * v.data[i];
  }
  return z.reshaped({n});
}

}  // namespace scenecomp
