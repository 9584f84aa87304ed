#pragma once

#include "scenecomp/flow/model.hpp"

namespace scenecomp {

// One supervised example for a stage model: the clean latent, the scene
// condition, and the clean unoccluded crop the ORFA teacher sees.
struct TrainSample {
  nn::Tensor<double> z0;            // (C*R^3), occupancy/rgb encoded in [-1,1]
  ConditionBundle cond;
  nn::Tensor<double> clean_crop;    // (4, S, S)
};

struct TrainStepOptions {
  double lambda = 0.0;          // alignment loss weight
  bool use_orfa = false;        // requires a teacher
  double cfg_dropout = 0.1;     // chance to null the student condition
  bool unfreeze_base = false;   // also update the base branch
  bool use_control = true;
  // Skews the noise-level draw toward t = 1 (power-law t = u^(1/(1+2b))).
  // High-noise steps are where the sampler commits to a shape from the
  // condition alone; uniform t starves that regime on sparse occupancy
  // targets.
  double t_bias = 1.0;
};

// Encodes shell occupancy (or rgb over it) into the stage latent.
inline nn::Tensor<double> occupancy_to_latent(const OccGrid& grid) {
  nn::Tensor<double> z({int64_t(grid.cells())});
  for (size_t i = 0; i < grid.cells(); ++i) z.data[i] = grid.occupancy[i] * 2.0 - 1.0;
  return z;
}

inline OccGrid latent_to_occupancy(const nn::Tensor<double>& z, const CubeFrame& frame) {
  OccGrid g(frame);
  SC_CHECK(z.numel() == static_cast<int64_t>(g.cells()), "latent size mismatch");
  for (size_t i = 0; i < g.cells(); ++i)
    g.occupancy[i] = std::clamp((z.data[i] + 1.0) * 0.5, 0.0, 1.0);
  return g;
}

// RGB latent over a fixed occupancy mask: occupied voxels carry 2c-1, empty
// voxels are zero in latent space.
inline nn::Tensor<double> rgb_to_latent(const OccGrid& grid) {
  SC_CHECK(grid.has_rgb(), "grid has no rgb");
  int64_t cells = static_cast<int64_t>(grid.cells());
  nn::Tensor<double> z({3 * cells});
  for (int64_t i = 0; i < cells; ++i) {
    bool occ = grid.occupancy[i] > kOccupancyThreshold;
    for (int c = 0; c < 3; ++c)
      z.data[c * cells + i] = occ ? grid.rgb[i * 3 + c] * 2.0 - 1.0 : 0.0;
  }
  return z;
}

inline void latent_to_rgb(const nn::Tensor<double>& z, OccGrid& grid) {
  int64_t cells = static_cast<int64_t>(grid.cells());
  SC_CHECK(z.numel() == 3 * cells, "rgb latent size mismatch");
  grid.allocate_rgb();
  for (int64_t i = 0; i < cells; ++i)
    for (int c = 0; c < 3; ++c)
      grid.rgb[i * 3 + c] = std::clamp((z.data[c * cells + i] + 1.0) * 0.5, 0.0, 1.0);
}

template <class T>
LossReport train_step(DualBranchModel<T>& student, const DualBranchModel<T>* teacher,
                      const std::vector<const TrainSample*>& batch, nn::AdamW<T>& opt,
                      RngStream& rng, const TrainStepOptions& o) {
  SC_CHECK(!batch.empty(), "empty batch");
  SC_CHECK(!o.use_orfa || teacher != nullptr, "ORFA needs a teacher");
  const ModelConfig& cfg = student.config();
  const int64_t B = static_cast<int64_t>(batch.size()), n = cfg.grid_numel();

  std::vector<double> ts(B);
  nn::Tensor<T> z_t({B, n}), v_target({B, n});
  double t_power = 1.0 / (1.0 + 2.0 * std::max(0.0, o.t_bias));
  for (int64_t b = 0; b < B; ++b) {
    ts[b] = std::pow(rng.uniform(), t_power);
    nn::Tensor<double> eps = nn::Tensor<double>::randn(rng, {n});
    auto [zt, vt] = flow_interpolate(batch[b]->z0, eps, ts[b]);
    for (int64_t i = 0; i < n; ++i) {
      z_t.at2(b, i) = static_cast<T>(zt.data[i]);
      v_target.at2(b, i) = static_cast<T>(vt.data[i]);
    }
  }

  // Student input: scene bundles, with classifier-free dropout.
  std::vector<ConditionBundle> null_bundles;
  std::vector<const ConditionBundle*> student_bundles(B);
  null_bundles.reserve(B);
  for (int64_t b = 0; b < B; ++b) {
    bool drop = rng.uniform() < o.cfg_dropout;
    if (drop) {
      ConditionBundle nb;
      nb.null_flag = true;
      student_bundles[b] = &null_bundles.emplace_back(std::move(nb));
    } else {
      student_bundles[b] = &batch[b]->cond;
    }
  }
  ForwardInput<T> sin = student.assemble(student_bundles, ts, z_t);

  // Teacher probes on the same noised latents, conditioned on clean crops.
  std::vector<nn::Tensor<T>> teacher_probes;
  if (o.use_orfa) {
    ForwardInput<T> tin;
    tin.z_t = z_t;
    tin.t = ts;
    int s = teacher->config().crop_size;
    tin.crops = nn::Tensor<T>({B, int64_t(4) * s * s});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < batch[b]->clean_crop.numel(); ++i)
        tin.crops.at2(b, i) = static_cast<T>(batch[b]->clean_crop.data[i]);
    tin.globals = nn::Tensor<T>({B, int64_t(2) * s * s});
    tin.null_flags.assign(B, 0);
    nn::Tape<T> ttape;
    auto tout = teacher->forward(ttape, tin, false, false);
    for (auto p : tout.probes) teacher_probes.push_back(ttape.value_copy(p));
  }

  student.registry().zero_grads();
  nn::Tape<T> tape;
  auto sout = student.forward(tape, sin, o.use_control, true);
  auto l_fm = tape.mse(sout.velocity, tape.constant(v_target));

  LossReport report;
  report.lambda = o.lambda;
  report.l_fm = static_cast<double>(tape.value(l_fm).data[0]);
  typename nn::Tape<T>::Ref total = l_fm;
  if (o.use_orfa) {
    SC_CHECK(sout.probes.size() == teacher_probes.size(), "probe count mismatch");
    typename nn::Tape<T>::Ref acc = tape.cosine_rows_mean(
        sout.probes[0], tape.constant(teacher_probes[0]));
    for (size_t i = 1; i < sout.probes.size(); ++i)
      acc = tape.add(acc, tape.cosine_rows_mean(sout.probes[i],
                                                tape.constant(teacher_probes[i])));
    auto l_al = tape.scale(acc, T(-1.0 / sout.probes.size()));
    report.l_al = static_cast<double>(tape.value(l_al).data[0]);
    total = tape.add(l_fm, tape.scale(l_al, T(o.lambda)));
  }
  report.total = static_cast<double>(tape.value(total).data[0]);
  report.learning_rate = opt.current_lr();
  if (!std::isfinite(report.total))
    SC_THROW(Error, "non-finite training loss: fm=" + std::to_string(report.l_fm) +
                        " al=" + std::to_string(report.l_al));

  tape.backward(total);
  std::vector<std::string> groups;
  if (!o.use_control) groups = {"base"};
  else if (o.unfreeze_base) groups = {};  // everything
  else groups = {"control"};
  opt.step(student.registry(), groups);
  return report;
}

}  // namespace scenecomp
