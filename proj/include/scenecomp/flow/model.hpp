#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>

#include "scenecomp/cond/bundle.hpp"
#include "scenecomp/flow/losses.hpp"
#include "scenecomp/nn/modules.hpp"

namespace scenecomp {

inline constexpr int kTimeEmbedDim = 64;

struct ModelConfig {
  Stage stage = Stage::Coarse;
  int base_depth = 8;
  int control_depth = 4;  // K
  int width = 128;
  int heads = 4;
  int coarse_res = 16;
  int fine_res = 32;
  int patch_coarse = 2;
  int patch_fine = 4;
  double cfg_dropout_prob = 0.1;
  int token_dim = 64;     // conditioning token width
  int crop_size = 32;     // encoder input resolution
  int encoder_depth = 2;
  int encoder_heads = 2;
  int encoder_patch = 4;
  int probe_count = 0;    // 0 = probe every base block

  int grid_res() const { return stage == Stage::Coarse ? coarse_res : fine_res; }
  int grid_channels() const { return stage == Stage::Texture ? 3 : 1; }
  int patch() const { return stage == Stage::Coarse ? patch_coarse : patch_fine; }
  int64_t grid_numel() const {
    return int64_t(grid_channels()) * grid_res() * grid_res() * grid_res();
  }
  int tokens_per_side() const { return grid_res() / patch(); }
  int64_t tokens() const {
    int s = tokens_per_side();
    return int64_t(s) * s * s;
  }
  int patch_dim() const { return grid_channels() * patch() * patch() * patch(); }
  // Raw control condition per token: partial-occupancy patch + patch-mean
  // GAFP features (+ the fine occupancy canvas patch for the texture stage).
  int ctrl_cond_dim() const {
    int p3 = patch() * patch() * patch();
    return p3 + kPixelFeatureChannels + (stage == Stage::Texture ? p3 : 0);
  }
  int probes() const { return probe_count > 0 ? std::min(probe_count, base_depth) : base_depth; }

  void validate() const {
    SC_CHECK(base_depth >= 1 && width >= 8, "model too small");
    SC_CHECK(control_depth >= 1 && control_depth <= base_depth,
             "control depth must be in [1, base_depth]");
    SC_CHECK(width % heads == 0, "width must be divisible by heads");
    SC_CHECK(grid_res() % patch() == 0, "patch must divide the grid resolution");
    SC_CHECK(cfg_dropout_prob >= 0 && cfg_dropout_prob <= 1, "dropout prob range");
  }

  nlohmann::json to_json() const {
    return {{"stage", std::string(to_string(stage))},
            {"base_depth", base_depth},
            {"control_depth", control_depth},
            {"width", width},
            {"heads", heads},
            {"coarse_res", coarse_res},
            {"fine_res", fine_res},
            {"patch_coarse", patch_coarse},
            {"patch_fine", patch_fine},
            {"cfg_dropout_prob", cfg_dropout_prob},
            {"token_dim", token_dim},
            {"crop_size", crop_size},
            {"encoder_depth", encoder_depth},
            {"encoder_heads", encoder_heads},
            {"encoder_patch", encoder_patch},
            {"probe_count", probe_count}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.stage = stage_from(j.at("stage"));
    c.base_depth = j.at("base_depth");
    c.control_depth = j.at("control_depth");
    c.width = j.at("width");
    c.heads = j.at("heads");
    c.coarse_res = j.at("coarse_res");
    c.fine_res = j.at("fine_res");
    c.patch_coarse = j.at("patch_coarse");
    c.patch_fine = j.at("patch_fine");
    c.cfg_dropout_prob = j.at("cfg_dropout_prob");
    c.token_dim = j.at("token_dim");
    c.crop_size = j.at("crop_size");
    c.encoder_depth = j.at("encoder_depth");
    c.encoder_heads = j.at("encoder_heads");
    c.encoder_patch = j.at("encoder_patch");
    c.probe_count = j.at("probe_count");
    return c;
  }
};

// Raw per-token control condition for one bundle, laid out to match
// ModelConfig::ctrl_cond_dim(). Occupancy channels stay in [0,1] so a null
// bundle maps to all zeros.
inline nn::Tensor<double> control_cond_tokens(const ConditionBundle& b,
                                              const ModelConfig& cfg) {
  const int r = cfg.grid_res(), p = cfg.patch(), g = cfg.tokens_per_side();
  const int p3 = p * p * p, cdim = cfg.ctrl_cond_dim();
  SC_CHECK(b.partial_grid.res() == r, "bundle grid resolution mismatch");
  nn::Tensor<double> out({cfg.tokens(), cdim});
  int64_t tok = 0;
  for (int pi = 0; pi < g; ++pi)
    for (int pj = 0; pj < g; ++pj)
      for (int pk = 0; pk < g; ++pk, ++tok) {
        double* row = out.data.data() + tok * cdim;
        int q = 0;
        double mean_feat[kPixelFeatureChannels] = {0};
        for (int di = 0; di < p; ++di)
          for (int dj = 0; dj < p; ++dj)
            for (int dk = 0; dk < p; ++dk, ++q) {
              int i = pi * p + di, j = pj * p + dj, k = pk * p + dk;
              row[q] = b.partial_grid.occ(i, j, k);
              const double* f = b.gafp.cell(i, j, k);
              for (int c = 0; c < kPixelFeatureChannels; ++c) mean_feat[c] += f[c];
            }
        for (int c = 0; c < kPixelFeatureChannels; ++c) row[p3 + c] = mean_feat[c] / p3;
        if (cfg.stage == Stage::Texture) {
          SC_CHECK(b.base_occupancy.has_value() || b.null_flag,
                   "texture stage needs the occupancy canvas");
          q = p3 + kPixelFeatureChannels;
          for (int di = 0; di < p; ++di)
            for (int dj = 0; dj < p; ++dj)
              for (int dk = 0; dk < p; ++dk, ++q)
                row[q] = b.base_occupancy
                             ? b.base_occupancy->occ(pi * p + di, pj * p + dj, pk * p + dk)
                             : 0.0;
        }
      }
  return out;
}

// Stacked plain inputs for one forward call over a batch.
template <class T>
struct ForwardInput {
  nn::Tensor<T> z_t;        // (B, C*R^3)
  std::vector<double> t;    // per sample
  nn::Tensor<T> ctrl_cond;  // (B*L, ctrl_cond_dim)
  nn::Tensor<T> alpha_emb;  // (B, kRatioEmbedDim)
  nn::Tensor<T> vis_emb;    // (B, kRatioEmbedDim), texture only
  nn::Tensor<T> crops;      // (B, 4*S*S)
  nn::Tensor<T> globals;    // (B, 2*S*S)
  std::vector<uint8_t> null_flags;

  int64_t batch() const { return static_cast<int64_t>(t.size()); }
};

template <class T>
struct ForwardOutput {
  typename nn::Tape<T>::Ref velocity;            // (B, C*R^3)
  std::vector<typename nn::Tape<T>::Ref> probes;  // normalized base block outputs
};

struct DenoiserOutput {
  nn::Tensor<double> velocity;
  std::vector<nn::Tensor<double>> layer_features;
};

// Dual-branch rectified-flow denoiser: a DiT-style base branch conditioned
// on instance image tokens via cross-attention, plus an optional control
// branch (a copy of the first K blocks) that consumes the partial geometry
// and scene cues and feeds each base block input through a zero-initialized
// projection.
template <class T>
class DualBranchModel {
 public:
  using Ref = typename nn::Tape<T>::Ref;

  DualBranchModel(const ModelConfig& cfg, uint64_t init_seed, bool with_control)
      : cfg_(cfg), with_control_(with_control) {
    cfg_.validate();
    RngStream rng(init_seed);
    const int w = cfg_.width, d = cfg_.token_dim;

    patch_embed_ = nn::Linear<T>(reg_, "base.patch_embed", "base", cfg_.patch_dim(), w, rng);
    pos_ = &reg_.create("base.pos", "base", {cfg_.tokens(), w}, rng, 0.02);
    time_fc1_ = nn::Linear<T>(reg_, "base.time.fc1", "base", kTimeEmbedDim, w, rng);
    time_fc2_ = nn::Linear<T>(reg_, "base.time.fc2", "base", w, w, rng);
    for (int b = 0; b < cfg_.base_depth; ++b)
      base_blocks_.push_back(make_block(rng, "base.block" + std::to_string(b), "base"));
    final_ada_ = nn::Linear<T>(reg_, "base.final.ada", "base", w, 2 * w, rng, 0.02);
    head_ = nn::Linear<T>(reg_, "base.final.head", "base", w, cfg_.patch_dim(), rng);

    PatchEncoderConfig icfg{4, cfg_.crop_size, cfg_.encoder_patch, d, cfg_.encoder_depth,
                            cfg_.encoder_heads};
    enc_instance_ = PatchEncoder<T>(reg_, "base.enc_inst", "base", icfg, rng);
    null_inst_ = &reg_.create("base.null_inst_tokens", "base", {icfg.tokens(), d}, rng, 0.02);

    if (with_control_) {
      ctrl_z_embed_ =
          nn::Linear<T>(reg_, "control.z_embed", "control", cfg_.patch_dim(), w, rng);
      ctrl_cond_embed_ =
          nn::Linear<T>(reg_, "control.cond_embed", "control", cfg_.ctrl_cond_dim(), w, rng);
      ctrl_pos_ = &reg_.create("control.pos", "control", {cfg_.tokens(), w}, rng, 0.02);
      alpha_proj_ = nn::Linear<T>(reg_, "control.alpha_proj", "control", kRatioEmbedDim, w, rng);
      if (cfg_.stage == Stage::Texture)
        vis_proj_ = nn::Linear<T>(reg_, "control.vis_proj", "control", kRatioEmbedDim, w, rng);
      for (int b = 0; b < cfg_.control_depth; ++b) {
        ctrl_blocks_.push_back(make_block(rng, "control.block" + std::to_string(b), "control"));
        zero_projs_.push_back(
            nn::Linear<T>(reg_, "control.proj" + std::to_string(b), "control", w, w, rng, 0.0));
      }
      PatchEncoderConfig gcfg{2, cfg_.crop_size, cfg_.encoder_patch, d, cfg_.encoder_depth,
                              cfg_.encoder_heads};
      enc_global_ = PatchEncoder<T>(reg_, "control.enc_glob", "control", gcfg, rng);
      null_glob_ = &reg_.create("control.null_glob_tokens", "control", {gcfg.tokens(), d}, rng,
                                0.02);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  bool with_control() const { return with_control_; }
  nn::ParamRegistry<T>& registry() { return reg_; }
  const nn::ParamRegistry<T>& registry() const { return reg_; }
  const PatchEncoder<T>& instance_encoder() const { return enc_instance_; }
  const PatchEncoder<T>& global_encoder() const { return enc_global_; }
  const PixelFeaturizer& featurizer() const { return featurizer_; }

  CondEncoders<T> encoders() const {
    CondEncoders<T> e;
    e.instance = const_cast<PatchEncoder<T>*>(&enc_instance_);
    e.global = with_control_ ? const_cast<PatchEncoder<T>*>(&enc_global_) : nullptr;
    e.featurizer = &featurizer_;
    return e;
  }

  // Copies every base-group parameter from a pretrained prior.
  void load_base_from(const DualBranchModel& prior) {
    for (const auto& p : prior.reg_.params()) {
      if (p.group != "base") continue;
      auto* mine = reg_.find(p.name);
      SC_CHECK(mine != nullptr, "missing base param " + p.name);
      SC_CHECK(mine->w.shape == p.w.shape, "base param shape mismatch: " + p.name);
      mine->w = p.w;
    }
  }

  ForwardOutput<T> forward(nn::Tape<T>& tape, const ForwardInput<T>& in, bool use_control,
                           bool with_grad) const {
    const int64_t B = in.batch(), L = cfg_.tokens(), w = cfg_.width;
    SC_CHECK(!use_control || with_control_, "model has no control branch");
    Ctx ctx{&tape, with_grad};

    // Time conditioning, shared by all blocks.
    nn::Tensor<T> t_sin({B, kTimeEmbedDim});
    for (int64_t b = 0; b < B; ++b) {
      auto e = sinusoidal_embed(in.t[b], kTimeEmbedDim);
      for (int k = 0; k < kTimeEmbedDim; ++k) t_sin.at2(b, k) = static_cast<T>(e[k]);
    }
    Ref t_emb = lin(ctx, time_fc2_, tape.silu(lin(ctx, time_fc1_, tape.constant(t_sin))));
    Ref t_act = tape.silu(t_emb);

    // Base token stream.
    Ref z_tokens = tape.gather(tape.constant(in.z_t), patchify_map(B),
                               {B * L, cfg_.patch_dim()});
    Ref x = lin(ctx, patch_embed_, z_tokens);
    x = tape.add_tile_rows(x, par(ctx, *pos_));

    // Instance tokens from the crops, with per-sample null substitution.
    Ref inst_tokens = cond_tokens(ctx, enc_instance_, in.crops, *null_inst_, in.null_flags, B);

    // Control stream.
    std::vector<Ref> injections;
    if (use_control) {
      Ref c = lin(ctx, ctrl_z_embed_, tape.gather(tape.constant(in.z_t), patchify_map(B),
                                                  {B * L, cfg_.patch_dim()}));
      c = tape.add(c, lin(ctx, ctrl_cond_embed_, tape.constant(in.ctrl_cond)));
      c = tape.add_tile_rows(c, par(ctx, *ctrl_pos_));
      c = tape.add_bcast_rows(c, lin(ctx, alpha_proj_, tape.constant(in.alpha_emb)), L);
      if (cfg_.stage == Stage::Texture)
        c = tape.add_bcast_rows(c, lin(ctx, vis_proj_, tape.constant(in.vis_emb)), L);
      Ref glob_tokens = cond_tokens(ctx, enc_global_, in.globals, *null_glob_, in.null_flags, B);
      for (int bl = 0; bl < cfg_.control_depth; ++bl) {
        c = block_forward(ctx, ctrl_blocks_[bl], c, t_act, glob_tokens, B, L);
        injections.push_back(lin(ctx, zero_projs_[bl], c));
      }
    }

    ForwardOutput<T> out;
    for (int bl = 0; bl < cfg_.base_depth; ++bl) {
      if (use_control && bl < static_cast<int>(injections.size()))
        x = tape.add(x, injections[bl]);
      x = block_forward(ctx, base_blocks_[bl], x, t_act, inst_tokens, B, L);
      if (bl >= cfg_.base_depth - cfg_.probes()) out.probes.push_back(tape.layernorm_rows(x));
    }

    // Modulated head back to the grid.
    Ref mod = lin(ctx, final_ada_, t_act);
    Ref shift = tape.slice_cols(mod, 0, w), scale = tape.slice_cols(mod, w, 2 * w);
    Ref h = tape.layernorm_rows(x);
    h = tape.mul_bcast_rows(h, tape.add_const(scale, T(1)), L);
    h = tape.add_bcast_rows(h, shift, L);
    Ref tokens_out = lin(ctx, head_, h);
    out.velocity = tape.gather(tokens_out, unpatchify_map(B), {B, cfg_.grid_numel()});
    return out;
  }

  // Single-sample convenience wrapper returning plain tensors.
  DenoiserOutput denoise(const nn::Tensor<T>& z_t, double t, const ConditionBundle& cond,
                         bool use_control = true) const {
    ForwardInput<T> in = assemble({&cond}, {t}, z_t.reshaped({1, cfg_.grid_numel()}));
    nn::Tape<T> tape;
    auto out = forward(tape, in, use_control && with_control_, false);
    DenoiserOutput res;
    res.velocity = tape.value_copy(out.velocity);
    for (auto p : out.probes) res.layer_features.push_back(tape.value_copy(p));
    return res;
  }

  // Stacks bundles into a ForwardInput; z_t rows must already be stacked.
  ForwardInput<T> assemble(const std::vector<const ConditionBundle*>& bundles,
                           const std::vector<double>& ts, nn::Tensor<T> z_t) const {
    const int64_t B = static_cast<int64_t>(bundles.size()), L = cfg_.tokens();
    SC_CHECK(ts.size() == bundles.size(), "t count mismatch");
    SC_CHECK(z_t.rows() == B && z_t.cols() == cfg_.grid_numel(), "z_t shape mismatch");
    ForwardInput<T> in;
    in.z_t = std::move(z_t);
    in.t = ts;
    in.ctrl_cond = nn::Tensor<T>({B * L, cfg_.ctrl_cond_dim()});
    in.alpha_emb = nn::Tensor<T>({B, kRatioEmbedDim});
    in.vis_emb = nn::Tensor<T>({B, kRatioEmbedDim});
    int s = cfg_.crop_size;
    in.crops = nn::Tensor<T>({B, int64_t(4) * s * s});
    in.globals = nn::Tensor<T>({B, int64_t(2) * s * s});
    in.null_flags.resize(B, 0);
    for (int64_t b = 0; b < B; ++b) {
      const ConditionBundle& bd = *bundles[b];
      in.null_flags[b] = bd.null_flag ? 1 : 0;
      double alpha = bd.null_flag ? 0.0 : bd.depth_ratio.value;
      auto ae = sinusoidal_embed(alpha, kRatioEmbedDim);
      for (int k = 0; k < kRatioEmbedDim; ++k) in.alpha_emb.at2(b, k) = static_cast<T>(ae[k]);
      double vis = (!bd.null_flag && bd.visibility) ? bd.visibility->value : 0.0;
      auto ve = sinusoidal_embed(vis, kRatioEmbedDim);
      for (int k = 0; k < kRatioEmbedDim; ++k) in.vis_emb.at2(b, k) = static_cast<T>(ve[k]);
      if (!bd.null_flag) {
        SC_CHECK(bd.crop_image.numel() == int64_t(4) * s * s &&
                     bd.global_image.numel() == int64_t(2) * s * s,
                 "bundle image size does not match the model crop size");
        nn::Tensor<double> cc = control_cond_tokens(bd, cfg_);
        for (int64_t i = 0; i < cc.numel(); ++i)
          in.ctrl_cond.data[b * L * cfg_.ctrl_cond_dim() + i] = static_cast<T>(cc.data[i]);
        for (int64_t i = 0; i < bd.crop_image.numel(); ++i)
          in.crops.at2(b, i) = static_cast<T>(bd.crop_image.data[i]);
        for (int64_t i = 0; i < bd.global_image.numel(); ++i)
          in.globals.at2(b, i) = static_cast<T>(bd.global_image.data[i]);
      }
    }
    return in;
  }

 private:
  struct Block {
    nn::Linear<T> ada;       // width -> 6*width, zero-init
    nn::Linear<T> qkv, attn_out;
    nn::Linear<T> cross_q, cross_k, cross_v, cross_out;
    nn::Linear<T> ffn1, ffn2;
  };

  Block make_block(RngStream& rng, const std::string& name, const std::string& group) {
    const int w = cfg_.width, d = cfg_.token_dim;
    Block b;
    b.ada = nn::Linear<T>(reg_, name + ".ada", group, w, 6 * w, rng, 0.02);
    b.qkv = nn::Linear<T>(reg_, name + ".qkv", group, w, 3 * w, rng);
    b.attn_out = nn::Linear<T>(reg_, name + ".attn_out", group, w, w, rng);
    b.cross_q = nn::Linear<T>(reg_, name + ".cross_q", group, w, w, rng);
    b.cross_k = nn::Linear<T>(reg_, name + ".cross_k", group, d, w, rng);
    b.cross_v = nn::Linear<T>(reg_, name + ".cross_v", group, d, w, rng);
    b.cross_out = nn::Linear<T>(reg_, name + ".cross_out", group, w, w, rng,
                                0.3 / std::sqrt(double(w)));
    b.ffn1 = nn::Linear<T>(reg_, name + ".ffn1", group, w, 4 * w, rng);
    b.ffn2 = nn::Linear<T>(reg_, name + ".ffn2", group, 4 * w, w, rng);
    return b;
  }

  struct Ctx {
    nn::Tape<T>* tape;
    bool grad;
  };

  // Linear through either trainable params or frozen constants.
  Ref lin(const Ctx& ctx, const nn::Linear<T>& l, Ref x) const {
    return ctx.tape->add_rowvec(ctx.tape->matmul(x, par(ctx, *l.w)), par(ctx, *l.b));
  }
  Ref par(const Ctx& ctx, nn::Param<T>& p) const {
    return ctx.grad ? ctx.tape->param(p) : ctx.tape->constant(p.w);
  }

  // Pre-norm DiT block with adaLN-Zero modulation and cross-attention to a
  // per-sample condition token stream.
  Ref block_forward(const Ctx& ctx, const Block& blk, Ref x, Ref t_act, Ref cond_tokens,
                    int64_t B, int64_t L) const {
    nn::Tape<T>& tape = *ctx.tape;
    const int w = cfg_.width;
    Ref mod = lin(ctx, blk.ada, t_act);  // B x 6w
    auto chunk = [&](int i) { return tape.slice_cols(mod, i * w, (i + 1) * w); };
    Ref shift1 = chunk(0), scale1 = chunk(1), gate1 = chunk(2);
    Ref shift2 = chunk(3), scale2 = chunk(4), gate2 = chunk(5);

    Ref h = tape.layernorm_rows(x);
    h = tape.mul_bcast_rows(h, tape.add_const(scale1, T(1)), L);
    h = tape.add_bcast_rows(h, shift1, L);
    Ref qkv = lin(ctx, blk.qkv, h);
    Ref att = tape.attention(tape.slice_cols(qkv, 0, w), tape.slice_cols(qkv, w, 2 * w),
                             tape.slice_cols(qkv, 2 * w, 3 * w), B, cfg_.heads);
    x = tape.add(x, tape.mul_bcast_rows(lin(ctx, blk.attn_out, att), gate1, L));

    Ref cq = lin(ctx, blk.cross_q, tape.layernorm_rows(x));
    Ref ca = tape.attention(cq, lin(ctx, blk.cross_k, cond_tokens),
                            lin(ctx, blk.cross_v, cond_tokens), B, cfg_.heads);
    x = tape.add(x, lin(ctx, blk.cross_out, ca));

    Ref h2 = tape.layernorm_rows(x);
    h2 = tape.mul_bcast_rows(h2, tape.add_const(scale2, T(1)), L);
    h2 = tape.add_bcast_rows(h2, shift2, L);
    Ref ff = lin(ctx, blk.ffn2, tape.gelu(lin(ctx, blk.ffn1, h2)));
    return tape.add(x, tape.mul_bcast_rows(ff, gate2, L));
  }

  // Condition token stream with per-sample null substitution.
  Ref cond_tokens(const Ctx& ctx, const PatchEncoder<T>& enc, const nn::Tensor<T>& images,
                  nn::Param<T>& null_tokens, const std::vector<uint8_t>& null_flags,
                  int64_t B) const {
    nn::Tape<T>& tape = *ctx.tape;
    int64_t lc = enc.config().tokens();
    bool all_null = true, any_null = false;
    for (uint8_t f : null_flags) {
      if (f) any_null = true;
      else all_null = false;
    }
    if (all_null) {
      std::vector<Ref> parts(B, par(ctx, null_tokens));
      return B == 1 ? parts[0] : tape.concat_rows(parts);
    }
    Ref encoded = enc.forward(tape, tape.constant(images), B);
    if (!any_null) return encoded;
    std::vector<Ref> parts;
    for (int64_t b = 0; b < B; ++b)
      parts.push_back(null_flags[b] ? par(ctx, null_tokens)
                                    : tape.slice_rows(encoded, b * lc, (b + 1) * lc));
    return tape.concat_rows(parts);
  }

  // (b, token, dy..., c) gather maps between grid layout (b, c, i, j, k)
  // and token layout; cached per batch size.
  std::shared_ptr<const std::vector<int64_t>> patchify_map(int64_t B) const {
    std::lock_guard<std::mutex> lock(map_mutex_);
    auto it = patch_maps_.find(B);
    if (it != patch_maps_.end()) return it->second;
    const int r = cfg_.grid_res(), p = cfg_.patch(), g = cfg_.tokens_per_side();
    const int c = cfg_.grid_channels();
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(size_t(B) * cfg_.grid_numel());
    for (int64_t b = 0; b < B; ++b)
      for (int pi = 0; pi < g; ++pi)
        for (int pj = 0; pj < g; ++pj)
          for (int pk = 0; pk < g; ++pk)
            for (int di = 0; di < p; ++di)
              for (int dj = 0; dj < p; ++dj)
                for (int dk = 0; dk < p; ++dk)
                  for (int ch = 0; ch < c; ++ch)
                    map->push_back((((b * c + ch) * r + (pi * p + di)) * r + (pj * p + dj)) * r +
                                   (pk * p + dk));
    patch_maps_[B] = map;
    return map;
  }

  std::shared_ptr<const std::vector<int64_t>> unpatchify_map(int64_t B) const {
    auto fwd = patchify_map(B);
    std::lock_guard<std::mutex> lock(map_mutex_);
    auto it = unpatch_maps_.find(B);
    if (it != unpatch_maps_.end()) return it->second;
    auto map = std::make_shared<std::vector<int64_t>>(fwd->size());
    for (size_t i = 0; i < fwd->size(); ++i) (*map)[(*fwd)[i]] = static_cast<int64_t>(i);
    unpatch_maps_[B] = map;
    return map;
  }

  ModelConfig cfg_;
  bool with_control_ = false;
  nn::ParamRegistry<T> reg_;
  PixelFeaturizer featurizer_;

  nn::Linear<T> patch_embed_, time_fc1_, time_fc2_, final_ada_, head_;
  nn::Param<T>* pos_ = nullptr;
  std::vector<Block> base_blocks_;
  PatchEncoder<T> enc_instance_;
  nn::Param<T>* null_inst_ = nullptr;

  nn::Linear<T> ctrl_z_embed_, ctrl_cond_embed_, alpha_proj_, vis_proj_;
  nn::Param<T>* ctrl_pos_ = nullptr;
  std::vector<Block> ctrl_blocks_;
  std::vector<nn::Linear<T>> zero_projs_;
  PatchEncoder<T> enc_global_;
  nn::Param<T>* null_glob_ = nullptr;

  mutable std::mutex map_mutex_;
  mutable std::map<int64_t, std::shared_ptr<const std::vector<int64_t>>> patch_maps_;
  mutable std::map<int64_t, std::shared_ptr<const std::vector<int64_t>>> unpatch_maps_;
};

}  // namespace scenecomp
