#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "scenecomp/harness/commands.hpp"

using namespace scenecomp;
namespace fs = std::filesystem;

#ifndef SCENECOMP_CLI_PATH
#define SCENECOMP_CLI_PATH "scenecomp"
#endif

namespace {

nlohmann::json micro_json() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "forge": { "scenes": 12, "raster": 64, "cameras": 2, "min_pixels": 8,
               "surface_samples": 512 },
    "model": { "width": 16, "base_depth": 2, "control_depth": 2, "heads": 2,
               "coarse_res": 8, "fine_res": 8, "patch_coarse": 2, "patch_fine": 2,
               "token_dim": 16, "crop_size": 16, "encoder_patch": 4, "encoder_depth": 1 },
    "pretrain": { "steps": 10, "batch": 2, "pool": 6 },
    "train": { "steps": 10, "batch": 2, "max_items": 16, "alpha_draws": 1 },
    "infer": { "steps": 3, "cfg_scale": 2.0, "max_scenes": 1 },
    "eval": { "samples_per_object": 512 },
    "ablate": { "k_values": [1, 2], "pretrain_steps": 8, "train_steps": 8,
                "infer_steps": 2, "max_scenes": 1 }
  })");
}

// One micro workflow shared by the harness tests: forge + pretrain + train.
struct Workspace {
  fs::path root;
  RunConfig rc;

  Workspace() {
    root = fs::temp_directory_path() / "scenecomp_harness_ws";
    fs::remove_all(root);
    fs::create_directories(root);
    nlohmann::json j = micro_json();
    j["data_root"] = (root / "data").string();
    j["out_root"] = (root / "out").string();
    rc = parse_run_config(j);
    cmd_forge(rc);
    for (Stage s : {Stage::Coarse, Stage::Fine, Stage::Texture}) cmd_pretrain(rc, s);
    for (Stage s : {Stage::Coarse, Stage::Fine, Stage::Texture}) cmd_train(rc, s);
  }

  static Workspace& instance() {
    static Workspace ws;
    return ws;
  }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(SCENECOMP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string dataset_checksum(const fs::path& root) {
  Sha256 h;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::string rel = fs::relative(f, root).string();
    h.update(rel.data(), rel.size());
    std::string bytes = io::read_file(f);
    h.update(bytes.data(), bytes.size());
  }
  return Sha256::to_hex(h.finish());
}

}  // namespace

TEST_CASE("config validation rejects unknown keys and bad types with paths") {
  nlohmann::json j = micro_json();
  j["forge"]["bogus_knob"] = 1;
  try {
    parse_run_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("config.forge.bogus_knob") != std::string::npos);
  }

  nlohmann::json j2 = micro_json();
  j2["model"]["width"] = "wide";
  try {
    parse_run_config(j2);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("config.model.width") != std::string::npos);
  }

  nlohmann::json j3 = micro_json();
  j3["infer"]["alpha"] = 1.5;
  CHECK_THROWS_AS(parse_run_config(j3), ConfigError);
}

TEST_CASE("dot-path overrides reach nested keys") {
  nlohmann::json j = micro_json();
  apply_override(j, "model.width=32");
  apply_override(j, "train.orfa=false");
  RunConfig rc = parse_run_config(j);
  CHECK(rc.model.width == 32);
  CHECK_FALSE(rc.train.orfa);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("split follows the seed modulus 8/1/1 rule") {
  SplitIds s;
  for (uint64_t seed = 0; seed < 30; ++seed) split_of(s, seed).push_back(seed);
  CHECK(s.train.size() == 24);
  CHECK(s.val.size() == 3);
  CHECK(s.test.size() == 3);
  for (uint64_t v : s.val) CHECK(v % 10 == 8);
  for (uint64_t v : s.test) CHECK(v % 10 == 9);
}

TEST_CASE("forge is bit-reproducible across runs") {
  fs::path root = fs::temp_directory_path() / "scenecomp_forge_repro";
  fs::remove_all(root);
  nlohmann::json j = micro_json();
  j["forge"]["scenes"] = 6;
  j["data_root"] = (root / "a").string();
  RunConfig rc1 = parse_run_config(j);
  cmd_forge(rc1);
  j["data_root"] = (root / "b").string();
  RunConfig rc2 = parse_run_config(j);
  cmd_forge(rc2);
  CHECK(dataset_checksum(root / "a") == dataset_checksum(root / "b"));
  fs::remove_all(root);
}

TEST_CASE("workflow artifacts exist and checkpoints honor their stages") {
  Workspace& ws = Workspace::instance();
  CHECK(fs::exists(ws.rc.data_root / "splits.json"));
  for (Stage s : {Stage::Coarse, Stage::Fine, Stage::Texture}) {
    CHECK(fs::exists(prior_path(ws.rc, s)));
    CHECK(fs::exists(stage_path(ws.rc, s)));
  }
  CHECK_THROWS_AS(checkpoint_load<double>(stage_path(ws.rc, Stage::Fine), Stage::Coarse),
                  StageMismatchError);
}

TEST_CASE("pretrained prior wraps into a fresh dual-branch with the identity intact") {
  Workspace& ws = Workspace::instance();
  auto prior = checkpoint_load<double>(prior_path(ws.rc, Stage::Coarse), Stage::Coarse);
  ModelConfig cfg = prior->config();
  DualBranchModel<double> wrapped(cfg, 123, true);
  wrapped.load_base_from(*prior);

  RngStream rng(5);
  nn::Tensor<double> z_t = nn::Tensor<double>::randn(rng, {cfg.grid_numel()});
  ConditionBundle null_bundle;
  null_bundle.null_flag = true;
  DenoiserOutput a = wrapped.denoise(z_t, 0.4, null_bundle, true);
  DenoiserOutput b = wrapped.denoise(z_t, 0.4, null_bundle, false);
  DenoiserOutput c = prior->denoise(z_t, 0.4, null_bundle, false);
  for (int64_t i = 0; i < a.velocity.numel(); ++i) {
    CHECK(std::abs(a.velocity.data[i] - b.velocity.data[i]) < 1e-6);
    CHECK(a.velocity.data[i] == c.velocity.data[i]);  // same base weights
  }
}

TEST_CASE("training logs carry the orfa column only when enabled") {
  Workspace& ws = Workspace::instance();
  std::ifstream log(ws.rc.out_root / "train_coarse_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,l_fm,l_al,total,lr");
  int rows = 0;
  std::string line;
  while (std::getline(log, line)) {
    if (!line.empty()) ++rows;
    // Every l_al entry stays finite and in [-1, 1].
    auto c1 = line.find(','), c2 = line.find(',', line.find(',') + 1);
    if (c2 != std::string::npos) {
      double lal = std::stod(line.substr(c2 + 1));
      CHECK(std::isfinite(lal));
      CHECK(lal >= -1.0);
      CHECK(lal <= 1.0);
    }
  }
  CHECK(rows == ws.rc.train.steps);

  RunConfig rc2 = ws.rc;
  rc2.train.orfa = false;
  rc2.out_root = ws.root / "out_noorfa";
  fs::create_directories(rc2.out_root);
  fs::copy_file(prior_path(ws.rc, Stage::Coarse), prior_path(rc2, Stage::Coarse),
                fs::copy_options::overwrite_existing);
  cmd_train(rc2, Stage::Coarse);
  std::ifstream log2(rc2.out_root / "train_coarse_log.csv");
  std::getline(log2, header);
  CHECK(header == "step,l_fm,total,lr");
}

TEST_CASE("missing teacher checkpoint is an explicit error") {
  Workspace& ws = Workspace::instance();
  RunConfig rc = ws.rc;
  rc.out_root = ws.root / "out_noteacher";
  try {
    cmd_train(rc, Stage::Coarse);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("pretrain") != std::string::npos);
  }
}

TEST_CASE("inference is byte-deterministic and reports per-stage timings") {
  Workspace& ws = Workspace::instance();
  cmd_infer(ws.rc);
  SplitIds splits = read_splits(ws.rc.data_root);
  REQUIRE(!splits.test.empty());
  fs::path dir = ws.rc.out_root / "infer" / scene_dir_name(splits.test[0]);
  std::string obj1 = io::read_file(dir / "completed.obj");
  nlohmann::json rep = nlohmann::json::parse(io::read_file(dir / "report.json"));
  REQUIRE(!rep.at("assets").empty());
  for (const auto& a : rep.at("assets")) {
    CHECK(a.contains("coarse_ms"));
    CHECK(a.contains("fine_ms"));
    CHECK(a.contains("texture_ms"));
    CHECK(a.contains("fallback"));
    CHECK(a.contains("b_full"));
  }

  cmd_infer(ws.rc);  // same seed: identical bytes
  CHECK(io::read_file(dir / "completed.obj") == obj1);

  auto rows = cmd_eval(ws.rc);
  CHECK(!rows.empty());
  CHECK(fs::exists(ws.rc.out_root / "eval.csv"));
  CHECK(fs::exists(ws.rc.out_root / "eval_detail.json"));
}

TEST_CASE("identity evaluation is the metric fixed point") {
  Workspace& ws = Workspace::instance();
  auto rows = cmd_eval(ws.rc, true);
  for (const auto& [id, r] : rows) {
    CHECK(r.cd_scene == Catch::Approx(0.0).margin(1e-12));
    CHECK(r.fs_scene == 100.0);
    CHECK(r.bbox_iou == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("alpha sweep emits one row per alpha and severity zero rows agree") {
  Workspace& ws = Workspace::instance();
  LoadedModels models = load_stage_models(ws.rc, false);
  RunConfig rc = ws.rc;
  rc.infer.texture = false;
  auto rows = robustness_sweep(rc, models.handles(), {0.2, 0.6, 1.0}, 0.0);
  REQUIRE(rows.size() == 3);
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::abs(rows[i].cd_scene - rows[0].cd_scene) < 1e-10);
    CHECK(std::abs(rows[i].fs_scene - rows[0].fs_scene) < 1e-10);
    CHECK(std::abs(rows[i].cd_object - rows[0].cd_object) < 1e-10);
    CHECK(std::abs(rows[i].fs_object - rows[0].fs_object) < 1e-10);
    CHECK(std::abs(rows[i].bbox_iou - rows[0].bbox_iou) < 1e-10);
  }
  // With real perturbations the rows differ.
  auto noisy = robustness_sweep(rc, models.handles(), {0.0, 1.0}, 0.2);
  CHECK(noisy[0].cd_object != noisy[1].cd_object);
}

TEST_CASE("pretrain loss decreases over the toy run") {
  Workspace& ws = Workspace::instance();
  RunConfig rc = ws.rc;
  rc.out_root = ws.root / "out_curve";
  rc.model.width = 32;
  rc.pretrain.steps = 400;
  rc.pretrain.batch = 4;
  rc.pretrain.lr = 2e-3;
  fs::create_directories(rc.out_root);
  cmd_pretrain(rc, Stage::Coarse);
  std::ifstream log(rc.out_root / "pretrain_coarse_log.csv");
  std::string line;
  std::getline(log, line);  // header
  std::vector<double> fm;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    fm.push_back(std::stod(line.substr(c1 + 1, line.find(',', c1 + 1) - c1 - 1)));
  }
  REQUIRE(fm.size() == 400);
  double early = 0, late = 0;
  for (int i = 5; i < 25; ++i) early += fm[i] / 20;
  for (int i = 370; i < 400; ++i) late += fm[i] / 30;
  CHECK(late < early * 0.5);

  // Determinism: a second run yields a byte-identical checkpoint.
  RunConfig rc2 = rc;
  rc2.out_root = ws.root / "out_curve2";
  fs::create_directories(rc2.out_root);
  cmd_pretrain(rc2, Stage::Coarse);
  CHECK(io::read_file(prior_path(rc, Stage::Coarse)) ==
        io::read_file(prior_path(rc2, Stage::Coarse)));
}

TEST_CASE("cli exit codes: usage 1, config 1, runtime 2, success 0") {
  Workspace& ws = Workspace::instance();
  CHECK(run_cli("forge --scenes 0 --data-root /tmp/scenecomp_unused") == 1);
  CHECK(run_cli("definitely-not-a-command") == 1);

  fs::path bad = ws.root / "bad.json";
  io::write_file(bad, "{\"forge\": {\"bogus\": 1}}");
  CHECK(run_cli("forge --config " + bad.string()) == 1);

  // Runtime failure: eval without predictions in a fresh out dir.
  fs::path empty_out = ws.root / "out_empty";
  fs::create_directories(empty_out);
  CHECK(run_cli("eval --data-root " + ws.rc.data_root.string() + " --out-root " +
                empty_out.string()) == 2);

  CHECK(run_cli("export --data-root " + ws.rc.data_root.string() + " --scene " +
                std::to_string(read_splits(ws.rc.data_root).test[0]) + " --out " +
                (ws.root / "gt.obj").string()) == 0);
  CHECK(fs::exists(ws.root / "gt.obj"));
}
