#pragma once

#include <cstdlib>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "scenecomp/eval/metrics.hpp"
#include "scenecomp/flow/model.hpp"
#include "scenecomp/forge/scene.hpp"
#include "scenecomp/io.hpp"

namespace scenecomp {

namespace detail {

// Strict section reader: every key must be consumed, every value must have
// the expected type; violations name the offending dotted path.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) SC_THROW(ConfigError, "at " + path_ + ": expected an object");
  }

  int geti(const std::string& key, int def) {
    return fetch<int>(key, def, [](const nlohmann::json& v) { return v.is_number_integer(); },
                      "integer");
  }
  double getd(const std::string& key, double def) {
    return fetch<double>(key, def, [](const nlohmann::json& v) { return v.is_number(); },
                         "number");
  }
  bool getb(const std::string& key, bool def) {
    return fetch<bool>(key, def, [](const nlohmann::json& v) { return v.is_boolean(); },
                       "boolean");
  }
  std::string gets(const std::string& key, const std::string& def) {
    return fetch<std::string>(key, def,
                              [](const nlohmann::json& v) { return v.is_string(); }, "string");
  }
  uint64_t getu64(const std::string& key, uint64_t def) {
    return fetch<uint64_t>(key, def,
                           [](const nlohmann::json& v) { return v.is_number_unsigned() || v.is_number_integer(); },
                           "integer");
  }
  std::vector<int> getvi(const std::string& key, std::vector<int> def) {
    if (!j_.contains(key)) return def;
    used_.insert(key);
    const auto& v = j_.at(key);
    if (!v.is_array()) SC_THROW(ConfigError, "at " + path_ + "." + key + ": expected an array");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer())
        SC_THROW(ConfigError, "at " + path_ + "." + key + ": expected integers");
      out.push_back(e.get<int>());
    }
    return out;
  }
  std::vector<double> getvd(const std::string& key, std::vector<double> def) {
    if (!j_.contains(key)) return def;
    used_.insert(key);
    const auto& v = j_.at(key);
    if (!v.is_array()) SC_THROW(ConfigError, "at " + path_ + "." + key + ": expected an array");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number())
        SC_THROW(ConfigError, "at " + path_ + "." + key + ": expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  nlohmann::json section(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return nlohmann::json::object();
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        SC_THROW(ConfigError, "at " + path_ + "." + it.key() + ": unknown key");
  }

 private:
  template <class T, class Pred>
  T fetch(const std::string& key, T def, Pred pred, const char* want) {
    if (!j_.contains(key)) return def;
    used_.insert(key);
    const auto& v = j_.at(key);
    if (!pred(v))
      SC_THROW(ConfigError, "at " + path_ + "." + key + ": expected " + want);
    return v.get<T>();
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

struct PretrainConfig {
  int steps = 600;
  int batch = 4;
  double lr = 1e-3;
  int pool = 64;          // object samples generated up front
  double cfg_dropout = 0.1;
};

struct TrainConfig {
  int steps = 600;
  int batch = 4;
  double lr = 1e-3;
  double lambda_coarse = 0.1;
  double lambda_fine = 0.5;
  double lambda_texture = 0.5;
  bool orfa = true;
  bool unfreeze_base = false;
  double cfg_dropout = 0.1;
  double severity = 0.1;
  int alpha_draws = 2;        // condition bundles per (scene, view, instance)
  int max_items = 256;        // cap on distinct training items
  bool fine_in_bexp = false;  // single-stage arm: fine stage trains in B_exp
};

struct InferConfig {
  int steps = 25;
  double cfg_scale = 5.0;
  double alpha = 1.0;
  double severity = 0.1;
  bool texture = true;
  int view = 0;
  int max_scenes = 0;  // 0 = whole split
};

struct AblateConfig {
  std::vector<int> k_values = {2, 4, 6};
  int pretrain_steps = 200;
  int train_steps = 120;
  int infer_steps = 12;
  int max_scenes = 2;
};

struct RunConfig {
  uint64_t seed = 1;
  bool deterministic = true;
  std::filesystem::path data_root = "data";
  std::filesystem::path out_root = "runs";
  int forge_scenes = 50;
  ForgeConfig forge;
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  InferConfig infer;
  MetricConfig metric;
  AblateConfig ablate;
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig rc;
  detail::SectionReader root(j, "config");
  rc.seed = root.getu64("seed", rc.seed);
  rc.deterministic = root.getb("deterministic", rc.deterministic);
  rc.data_root = root.gets("data_root", rc.data_root.string());
  rc.out_root = root.gets("out_root", rc.out_root.string());

  {
    nlohmann::json forge_sec = root.section("forge");
    detail::SectionReader f(forge_sec, "config.forge");
    rc.forge_scenes = f.geti("scenes", rc.forge_scenes);
    rc.forge.arena_side_lo = f.getd("arena_lo", rc.forge.arena_side_lo);
    rc.forge.arena_side_hi = f.getd("arena_hi", rc.forge.arena_side_hi);
    rc.forge.candidates = f.geti("candidates", rc.forge.candidates);
    rc.forge.min_instances = f.geti("min_instances", rc.forge.min_instances);
    rc.forge.max_instances = f.geti("max_instances", rc.forge.max_instances);
    rc.forge.max_place_attempts = f.geti("max_place_attempts", rc.forge.max_place_attempts);
    rc.forge.stack_prob = f.getd("stack_prob", rc.forge.stack_prob);
    rc.forge.max_walls = f.geti("max_walls", rc.forge.max_walls);
    rc.forge.cameras = f.geti("cameras", rc.forge.cameras);
    rc.forge.raster_size = f.geti("raster", rc.forge.raster_size);
    rc.forge.fov_deg = f.getd("fov_deg", rc.forge.fov_deg);
    rc.forge.surface_samples = f.geti("surface_samples", rc.forge.surface_samples);
    rc.forge.min_pixels = f.geti("min_pixels", rc.forge.min_pixels);
    rc.forge.with_rgb = f.getb("rgb", rc.forge.with_rgb);
    rc.forge.camera_attempts = f.geti("camera_attempts", rc.forge.camera_attempts);
    f.finish();
  }
  {
    nlohmann::json model_sec = root.section("model");
    detail::SectionReader m(model_sec, "config.model");
    rc.model.base_depth = m.geti("base_depth", rc.model.base_depth);
    rc.model.control_depth = m.geti("control_depth", rc.model.control_depth);
    rc.model.width = m.geti("width", rc.model.width);
    rc.model.heads = m.geti("heads", rc.model.heads);
    rc.model.coarse_res = m.geti("coarse_res", rc.model.coarse_res);
    rc.model.fine_res = m.geti("fine_res", rc.model.fine_res);
    rc.model.patch_coarse = m.geti("patch_coarse", rc.model.patch_coarse);
    rc.model.patch_fine = m.geti("patch_fine", rc.model.patch_fine);
    rc.model.cfg_dropout_prob = m.getd("cfg_dropout", rc.model.cfg_dropout_prob);
    rc.model.token_dim = m.geti("token_dim", rc.model.token_dim);
    rc.model.crop_size = m.geti("crop_size", rc.model.crop_size);
    rc.model.encoder_depth = m.geti("encoder_depth", rc.model.encoder_depth);
    rc.model.encoder_heads = m.geti("encoder_heads", rc.model.encoder_heads);
    rc.model.encoder_patch = m.geti("encoder_patch", rc.model.encoder_patch);
    rc.model.probe_count = m.geti("probe_count", rc.model.probe_count);
    m.finish();
  }
  {
    nlohmann::json pretrain_sec = root.section("pretrain");
    detail::SectionReader p(pretrain_sec, "config.pretrain");
    rc.pretrain.steps = p.geti("steps", rc.pretrain.steps);
    rc.pretrain.batch = p.geti("batch", rc.pretrain.batch);
    rc.pretrain.lr = p.getd("lr", rc.pretrain.lr);
    rc.pretrain.pool = p.geti("pool", rc.pretrain.pool);
    rc.pretrain.cfg_dropout = p.getd("cfg_dropout", rc.pretrain.cfg_dropout);
    p.finish();
  }
  {
    nlohmann::json train_sec = root.section("train");
    detail::SectionReader t(train_sec, "config.train");
    rc.train.steps = t.geti("steps", rc.train.steps);
    rc.train.batch = t.geti("batch", rc.train.batch);
    rc.train.lr = t.getd("lr", rc.train.lr);
    rc.train.lambda_coarse = t.getd("lambda_coarse", rc.train.lambda_coarse);
    rc.train.lambda_fine = t.getd("lambda_fine", rc.train.lambda_fine);
    rc.train.lambda_texture = t.getd("lambda_texture", rc.train.lambda_texture);
    rc.train.orfa = t.getb("orfa", rc.train.orfa);
    rc.train.unfreeze_base = t.getb("unfreeze_base", rc.train.unfreeze_base);
    rc.train.cfg_dropout = t.getd("cfg_dropout", rc.train.cfg_dropout);
    rc.train.severity = t.getd("severity", rc.train.severity);
    rc.train.alpha_draws = t.geti("alpha_draws", rc.train.alpha_draws);
    rc.train.max_items = t.geti("max_items", rc.train.max_items);
    rc.train.fine_in_bexp = t.getb("fine_in_bexp", rc.train.fine_in_bexp);
    t.finish();
  }
  {
    nlohmann::json infer_sec = root.section("infer");
    detail::SectionReader i(infer_sec, "config.infer");
    rc.infer.steps = i.geti("steps", rc.infer.steps);
    rc.infer.cfg_scale = i.getd("cfg_scale", rc.infer.cfg_scale);
    rc.infer.alpha = i.getd("alpha", rc.infer.alpha);
    rc.infer.severity = i.getd("severity", rc.infer.severity);
    rc.infer.texture = i.getb("texture", rc.infer.texture);
    rc.infer.view = i.geti("view", rc.infer.view);
    rc.infer.max_scenes = i.geti("max_scenes", rc.infer.max_scenes);
    i.finish();
  }
  {
    nlohmann::json eval_sec = root.section("eval");
    detail::SectionReader e(eval_sec, "config.eval");
    rc.metric.tau = e.getd("tau", rc.metric.tau);
    rc.metric.samples_per_object = e.geti("samples_per_object", rc.metric.samples_per_object);
    std::string norm = e.gets("normalization", "gt_scene_unit_maxside");
    if (norm == "gt_scene_unit_maxside")
      rc.metric.normalization = MetricNormalization::GtSceneUnitMaxSide;
    else if (norm == "none")
      rc.metric.normalization = MetricNormalization::None;
    else
      SC_THROW(ConfigError, "at config.eval.normalization: unknown value " + norm);
    e.finish();
  }
  {
    nlohmann::json ablate_sec = root.section("ablate");
    detail::SectionReader a(ablate_sec, "config.ablate");
    rc.ablate.k_values = a.getvi("k_values", rc.ablate.k_values);
    rc.ablate.pretrain_steps = a.geti("pretrain_steps", rc.ablate.pretrain_steps);
    rc.ablate.train_steps = a.geti("train_steps", rc.ablate.train_steps);
    rc.ablate.infer_steps = a.geti("infer_steps", rc.ablate.infer_steps);
    rc.ablate.max_scenes = a.geti("max_scenes", rc.ablate.max_scenes);
    a.finish();
  }
  root.finish();

  // Cross-field validation before any work happens.
  rc.forge.validate();
  rc.model.validate();
  rc.metric.validate();
  if (rc.forge_scenes < 1) SC_THROW(ConfigError, "at config.forge.scenes: must be >= 1");
  if (rc.pretrain.steps < 1 || rc.train.steps < 1)
    SC_THROW(ConfigError, "at config: step counts must be >= 1");
  if (rc.infer.steps < 1) SC_THROW(ConfigError, "at config.infer.steps: must be >= 1");
  if (rc.infer.cfg_scale < 0) SC_THROW(ConfigError, "at config.infer.cfg_scale: must be >= 0");
  if (rc.infer.alpha < 0 || rc.infer.alpha > 1)
    SC_THROW(ConfigError, "at config.infer.alpha: must lie in [0,1]");
  return rc;
}

// Applies "a.b.c=value" overrides onto the JSON tree before parsing.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    SC_THROW(ConfigError, "override must look like section.key=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  nlohmann::json* node = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) SC_THROW(ConfigError, "bad override path: " + path);
    if (dot == std::string::npos) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(value);
      } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare strings stay strings
      }
      (*node)[key] = parsed;
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

inline RunConfig load_run_config(const std::filesystem::path& config_path,
                                 const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    try {
      j = nlohmann::json::parse(io::read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      SC_THROW(ConfigError, "cannot parse " + config_path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig rc = parse_run_config(j);
  if (const char* env = std::getenv("SCENECOMP_DATA_ROOT"); env && !j.contains("data_root"))
    rc.data_root = env;
  return rc;
}

}  // namespace scenecomp
