#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "scenecomp/forge/scene.hpp"
#include "scenecomp/nn/modules.hpp"

namespace scenecomp {

enum class TokenKind { InstanceImage, GlobalGeometry };

struct TokenSeq {
  nn::Tensor<double> tokens;  // L x D
  TokenKind kind = TokenKind::InstanceImage;
};

struct PatchEncoderConfig {
  int in_channels = 4;
  int image_size = 32;
  int patch = 4;
  int dim = 64;
  int depth = 2;
  int heads = 2;

  int tokens() const { return (image_size / patch) * (image_size / patch); }
  int patch_dim() const { return in_channels * patch * patch; }
};

// Non-overlapping patch embedding followed by a small token mixer
// (pre-norm attention + MLP blocks). Stands in for a pretrained image
// encoder at desk scale; weights live in the model registry.
template <class T>
class PatchEncoder {
 public:
  PatchEncoder() = default;
  PatchEncoder(nn::ParamRegistry<T>& reg, const std::string& name, const std::string& group,
               const PatchEncoderConfig& cfg, RngStream& rng)
      : cfg_(cfg), embed_(reg, name + ".embed", group, cfg.patch_dim(), cfg.dim, rng) {
    pos_ = &reg.create(name + ".pos", group, {cfg.tokens(), cfg.dim}, rng, 0.02);
    for (int b = 0; b < cfg.depth; ++b) {
      std::string bn = name + ".block" + std::to_string(b);
      Block blk;
      blk.qkv = nn::Linear<T>(reg, bn + ".qkv", group, cfg.dim, 3 * cfg.dim, rng);
      blk.out = nn::Linear<T>(reg, bn + ".out", group, cfg.dim, cfg.dim, rng);
      blk.mlp = nn::Mlp<T>(reg, bn + ".mlp", group, cfg.dim, 2 * cfg.dim, rng);
      blocks_.push_back(blk);
    }
  }

  const PatchEncoderConfig& config() const { return cfg_; }

  // images: (B, in_channels * S * S) with channel-major pixels per sample.
  // Returns (B * tokens) x dim.
  typename nn::Tape<T>::Ref forward(nn::Tape<T>& tape, typename nn::Tape<T>::Ref images,
                                    int64_t batch) const {
    using Ref = typename nn::Tape<T>::Ref;
    Ref tok = tape.gather(images, patch_map(batch),
                          {batch * cfg_.tokens(), cfg_.patch_dim()});
    Ref x = embed_.forward(tape, tok);
    x = tape.add_tile_rows(x, tape.param(*pos_));
    for (const auto& blk : blocks_) {
      Ref n = tape.layernorm_rows(x);
      Ref qkv = blk.qkv.forward(tape, n);
      Ref q = tape.slice_cols(qkv, 0, cfg_.dim);
      Ref k = tape.slice_cols(qkv, cfg_.dim, 2 * cfg_.dim);
      Ref v = tape.slice_cols(qkv, 2 * cfg_.dim, 3 * cfg_.dim);
      Ref att = tape.attention(q, k, v, batch, cfg_.heads);
      x = tape.add(x, blk.out.forward(tape, att));
      x = tape.add(x, blk.mlp.forward(tape, tape.layernorm_rows(x)));
    }
    return tape.layernorm_rows(x);
  }

  // Eval-mode encoding of a single image into a TokenSeq.
  TokenSeq encode(const nn::Tensor<T>& image, TokenKind kind) const {
    nn::Tape<T> tape;
    auto in = tape.constant(image.reshaped({1, image.numel()}));
    auto out = forward(tape, in, 1);
    return TokenSeq{tape.value_copy(out), kind};
  }

 private:
  struct Block {
    nn::Linear<T> qkv, out;
    nn::Mlp<T> mlp;
  };

  // (b, token, dy, dx, c) -> flat input index (b, c, y, x).
  std::shared_ptr<const std::vector<int64_t>> patch_map(int64_t batch) const {
    std::lock_guard<std::mutex> lock(*map_mutex_);
    auto it = patch_maps_.find(batch);
    if (it != patch_maps_.end()) return it->second;
    int s = cfg_.image_size, p = cfg_.patch, g = s / p, c = cfg_.in_channels;
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(size_t(batch) * g * g * p * p * c);
    for (int64_t b = 0; b < batch; ++b)
      for (int ty = 0; ty < g; ++ty)
        for (int tx = 0; tx < g; ++tx)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx)
              for (int ch = 0; ch < c; ++ch)
                map->push_back(((b * c + ch) * s + (ty * p + dy)) * s + (tx * p + dx));
    patch_maps_[batch] = map;
    return map;
  }

  PatchEncoderConfig cfg_;
  nn::Linear<T> embed_;
  nn::Param<T>* pos_ = nullptr;
  std::vector<Block> blocks_;
  std::shared_ptr<std::mutex> map_mutex_ = std::make_shared<std::mutex>();
  mutable std::map<int64_t, std::shared_ptr<const std::vector<int64_t>>> patch_maps_;
};

// ---- image preparation ----

// Bilinear resample of a multi-channel image (channel-major) to S x S.
inline nn::Tensor<double> resize_channels(const std::vector<const Raster<double>*>& channels,
                                          int out_size) {
  int c = static_cast<int>(channels.size());
  int h = channels[0]->height, w = channels[0]->width;
  nn::Tensor<double> out({c, out_size, out_size});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_size; ++y) {
      double sy = (y + 0.5) * h / out_size - 0.5;
      sy = std::clamp(sy, 0.0, double(h - 1));
      int y0 = std::min(int(sy), h - 2 >= 0 ? h - 2 : 0);
      double ty = sy - y0;
      for (int x = 0; x < out_size; ++x) {
        double sx = (x + 0.5) * w / out_size - 0.5;
        sx = std::clamp(sx, 0.0, double(w - 1));
        int x0 = std::min(int(sx), w - 2 >= 0 ? w - 2 : 0);
        double tx = sx - x0;
        const Raster<double>& r = *channels[ch];
        double v = (1 - ty) * ((1 - tx) * r.at(y0, x0) + tx * r.at(y0, std::min(x0 + 1, w - 1))) +
                   ty * ((1 - tx) * r.at(std::min(y0 + 1, h - 1), x0) +
                         tx * r.at(std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1)));
        out.data[(size_t(ch) * out_size + y) * out_size + x] = v;
      }
    }
  }
  return out;
}

// Masked square crop around the instance mask, resized to S x S with
// channels [r*m, g*m, b*m, m].
inline nn::Tensor<double> instance_crop(const RgbRaster* rgb, const MaskRaster& mask,
                                        int out_size) {
  int h = mask.height, w = mask.width;
  int u0 = w, u1 = -1, v0 = h, v1 = -1;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (mask.at(v, u)) {
        u0 = std::min(u0, u);
        u1 = std::max(u1, u);
        v0 = std::min(v0, v);
        v1 = std::max(v1, v);
      }
  if (u1 < 0) return nn::Tensor<double>({4, out_size, out_size});
  int cu = (u0 + u1) / 2, cv = (v0 + v1) / 2;
  int half = std::max({u1 - u0 + 1, v1 - v0 + 1, 4});
  half = int(half * 0.55) + 1;  // ~10% margin around the square box
  Raster<double> cr(2 * half, 2 * half, 0.0), cg(2 * half, 2 * half, 0.0),
      cb(2 * half, 2 * half, 0.0), cm(2 * half, 2 * half, 0.0);
  for (int dy = 0; dy < 2 * half; ++dy)
    for (int dx = 0; dx < 2 * half; ++dx) {
      int sv = cv - half + dy, su = cu - half + dx;
      if (!mask.inside(sv, su) || !mask.at(sv, su)) continue;
      Rgb c = rgb ? rgb->at(sv, su) : Rgb{0.5, 0.5, 0.5};
      cr.at(dy, dx) = c.r;
      cg.at(dy, dx) = c.g;
      cb.at(dy, dx) = c.b;
      cm.at(dy, dx) = 1.0;
    }
  return resize_channels({&cr, &cg, &cb, &cm}, out_size);
}

// Full-view [normalized depth, foreground mask] channels resized to S x S.
inline nn::Tensor<double> global_view_image(const DepthRaster& depth, const IdRaster& ids,
                                            int out_size) {
  double dmax = 0;
  for (double d : depth.data) dmax = std::max(dmax, d);
  if (dmax <= 0) dmax = 1.0;
  Raster<double> dn(depth.height, depth.width, 0.0), fg(depth.height, depth.width, 0.0);
  for (size_t i = 0; i < depth.data.size(); ++i) {
    dn.data[i] = depth.data[i] / dmax;
    fg.data[i] = ids.data[i] > 0 ? 1.0 : 0.0;
  }
  return resize_channels({&dn, &fg}, out_size);
}

}  // namespace scenecomp
