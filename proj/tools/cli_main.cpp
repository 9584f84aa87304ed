// Command-line entry point binding the library into the full workflow:
// forge -> pretrain -> train -> infer -> eval -> ablate, plus GT export and
// the alpha robustness sweep. Exit codes: 0 success, 1 usage/config error,
// 2 runtime failure.

#include <CLI11.hpp>
#include <iostream>

#include "scenecomp/harness/commands.hpp"

using namespace scenecomp;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::optional<std::string> data_root;
  std::optional<std::string> out_root;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides,
                  "dot-path config override, e.g. --set model.width=64");
  cmd->add_option("--seed", args.seed, "root seed (overrides config)");
  cmd->add_option("--data-root", args.data_root, "dataset directory");
  cmd->add_option("--out-root", args.out_root, "output directory");
}

RunConfig resolve(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
  if (args.data_root) overrides.push_back("data_root=" + *args.data_root);
  if (args.out_root) overrides.push_back("out_root=" + *args.out_root);
  return load_run_config(args.config_path, overrides);
}

Stage parse_stage(const std::string& s) { return stage_from(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"procedural scene forging and in-place 3D completion"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* forge = app.add_subcommand("forge", "forge a synthetic scene dataset");
  std::optional<int> forge_scenes;
  add_common(forge, args);
  forge->add_option("--scenes", forge_scenes, "number of scenes (must be >= 1)");

  auto* pretrain = app.add_subcommand("pretrain", "train the object prior per stage");
  std::string pre_stage = "all";
  add_common(pretrain, args);
  pretrain->add_option("--stage", pre_stage, "coarse|fine|texture|all");

  auto* train = app.add_subcommand("train", "train a scene-stage model");
  std::string train_stage = "coarse";
  bool no_orfa = false;
  add_common(train, args);
  train->add_option("--stage", train_stage, "coarse|fine|texture")->required();
  train->add_flag("--no-orfa", no_orfa, "disable the alignment loss");

  auto* infer = app.add_subcommand("infer", "complete the test split in place");
  std::optional<int> infer_steps;
  std::optional<double> infer_cfg, infer_alpha;
  add_common(infer, args);
  infer->add_option("--steps", infer_steps, "sampling steps");
  infer->add_option("--cfg-scale", infer_cfg, "guidance strength");
  infer->add_option("--alpha", infer_alpha, "depth mixing coefficient");

  auto* evalc = app.add_subcommand("eval", "evaluate predictions against GT");
  bool identity = false;
  std::vector<double> sweep_alphas;
  std::optional<double> sweep_severity;
  add_common(evalc, args);
  evalc->add_flag("--identity", identity, "evaluate the GT against itself");
  evalc->add_option("--alpha-sweep", sweep_alphas,
                    "run the robustness sweep at these alpha values");
  evalc->add_option("--sweep-severity", sweep_severity,
                    "estimator severity for the sweep (default 0.1)");

  auto* ablate = app.add_subcommand("ablate", "run the ablation arms and emit the table");
  add_common(ablate, args);

  auto* exportc = app.add_subcommand("export", "export a forged scene as a colored-voxel OBJ");
  uint64_t export_scene_id = 0;
  std::string export_out = "scene.obj";
  add_common(exportc, args);
  exportc->add_option("--scene", export_scene_id, "scene id (its seed)")->required();
  exportc->add_option("--out", export_out, "output OBJ path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (forge->parsed()) {
      if (forge_scenes) {
        if (*forge_scenes < 1) {
          std::cerr << "usage error: --scenes must be >= 1\n";
          return 1;
        }
        args.overrides.push_back("forge.scenes=" + std::to_string(*forge_scenes));
      }
      RunConfig rc = resolve(args);
      ForgeSummary sum = cmd_forge(rc);
      if (sum.failed * 5 > sum.requested) {
        std::cerr << "forge: more than 20% of scenes failed\n";
        return 2;
      }
      return 0;
    }
    if (pretrain->parsed()) {
      RunConfig rc = resolve(args);
      if (pre_stage == "all") {
        for (Stage s : {Stage::Coarse, Stage::Fine, Stage::Texture}) cmd_pretrain(rc, s);
      } else {
        cmd_pretrain(rc, parse_stage(pre_stage));
      }
      return 0;
    }
    if (train->parsed()) {
      if (no_orfa) args.overrides.push_back("train.orfa=false");
      RunConfig rc = resolve(args);
      cmd_train(rc, parse_stage(train_stage));
      return 0;
    }
    if (infer->parsed()) {
      if (infer_steps) args.overrides.push_back("infer.steps=" + std::to_string(*infer_steps));
      if (infer_cfg)
        args.overrides.push_back("infer.cfg_scale=" + std::to_string(*infer_cfg));
      if (infer_alpha) args.overrides.push_back("infer.alpha=" + std::to_string(*infer_alpha));
      RunConfig rc = resolve(args);
      cmd_infer(rc);
      return 0;
    }
    if (evalc->parsed()) {
      RunConfig rc = resolve(args);
      if (!sweep_alphas.empty()) {
        cmd_sweep(rc, sweep_alphas, sweep_severity.value_or(0.1));
      } else {
        cmd_eval(rc, identity);
      }
      return 0;
    }
    if (ablate->parsed()) {
      RunConfig rc = resolve(args);
      cmd_ablate(rc);
      return 0;
    }
    if (exportc->parsed()) {
      RunConfig rc = resolve(args);
      cmd_export(rc, export_scene_id, export_out);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
