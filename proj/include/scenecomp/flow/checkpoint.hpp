#pragma once

#include <filesystem>
#include <memory>

#include "scenecomp/flow/model.hpp"
#include "scenecomp/io.hpp"
#include "scenecomp/sha256.hpp"

namespace scenecomp {

inline constexpr uint32_t kCheckpointMagic = 0x53434B31;  // "SCK1"
inline constexpr uint32_t kCheckpointVersion = 1;

// Versioned binary container: header (magic, version, stage, config JSON,
// control flag) + named little-endian float32 tensor blobs + SHA-256 trailer.
template <class T>
void checkpoint_save(const DualBranchModel<T>& model, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(to_string(model.config().stage));
  w.str(model.config().to_json().dump());
  w.u8(model.with_control() ? 1 : 0);
  const auto& params = model.registry().params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.str(p.group);
    w.u32(static_cast<uint32_t>(p.w.shape.size()));
    for (int64_t d : p.w.shape) w.u64(static_cast<uint64_t>(d));
    for (T x : p.w.data) w.f32(static_cast<float>(x));
  }
  std::string body = w.take();
  Sha256 h;
  h.update(body.data(), body.size());
  auto digest = h.finish();
  body.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  io::write_file(path, body);
}

// Loads a checkpoint; when expected_stage is set, a different stage raises
// StageMismatchError.
template <class T>
std::unique_ptr<DualBranchModel<T>> checkpoint_load(const std::filesystem::path& path,
                                                    std::optional<Stage> expected_stage = {}) {
  std::string bytes = io::read_file(path);
  if (bytes.size() < 40) SC_THROW(LoadError, "checkpoint too small: " + path.string());
  std::string body = bytes.substr(0, bytes.size() - 32);
  Sha256 h;
  h.update(body.data(), body.size());
  auto digest = h.finish();
  if (std::memcmp(digest.data(), bytes.data() + body.size(), 32) != 0)
    SC_THROW(LoadError, "checkpoint checksum failure: " + path.string());

  io::ByteReader r(body);
  if (r.u32() != kCheckpointMagic) SC_THROW(LoadError, "bad magic: " + path.string());
  if (r.u32() != kCheckpointVersion)
    SC_THROW(LoadError, "unsupported checkpoint version: " + path.string());
  Stage stage = stage_from(r.str());
  if (expected_stage && stage != *expected_stage)
    SC_THROW(StageMismatchError, "checkpoint holds a " + std::string(to_string(stage)) +
                                     " model, expected " + to_string(*expected_stage) + ": " +
                                     path.string());
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    SC_THROW(LoadError, "bad checkpoint config: " + std::string(e.what()));
  }
  bool with_control = r.u8() != 0;
  auto model = std::make_unique<DualBranchModel<T>>(cfg, 0, with_control);

  uint32_t count = r.u32();
  size_t filled = 0;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::string group = r.str();
    uint32_t rank = r.u32();
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(r.u64());
    auto* p = model->registry().find(name);
    if (!p) SC_THROW(LoadError, "unknown param in checkpoint: " + name);
    if (p->w.shape != shape || p->group != group)
      SC_THROW(LoadError, "param metadata mismatch: " + name);
    for (int64_t e = 0; e < p->w.numel(); ++e) p->w.data[e] = static_cast<T>(r.f32());
    ++filled;
  }
  if (filled != model->registry().params().size())
    SC_THROW(LoadError, "checkpoint is missing parameters");
  if (!r.exhausted()) SC_THROW(LoadError, "trailing bytes in checkpoint");
  return model;
}

}  // namespace scenecomp
