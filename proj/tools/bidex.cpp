// Command-line front end for the bimanual manipulation pipeline:
// demo generation, task construction, teacher RL, distillation, evaluation,
// and episode replay dumps.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "bidex/pipeline.hpp"
#include "bidex/runconfig.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

bidex::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return bidex::RunConfig{};
  return bidex::load_run_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bimanual manipulation pipeline"};
  app.require_subcommand(1);

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "generate a synthetic demo dataset");
  std::size_t gen_count = 10;
  std::vector<std::string> gen_templates = {"lift-hold"};
  std::uint64_t gen_seed = 1;
  std::string gen_out = "demos";
  std::size_t gen_length = 60;
  std::string gen_config;
  gen->add_option("--count", gen_count, "number of demos");
  gen->add_option("--templates", gen_templates,
                  "motion templates (lift-hold, pour, dust-sweep, empty-tilt)")
      ->delimiter(',');
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--length", gen_length, "steps per demo");
  gen->add_option("--config", gen_config, "run config (scene constants)");

  // build-tasks
  auto* build = app.add_subcommand("build-tasks", "construct and validate tasks");
  std::string build_config, build_dataset, build_out = "tasks";
  build->add_option("--config", build_config, "run config JSON")->required();
  build->add_option("--dataset", build_dataset, "dataset directory override");
  build->add_option("--out", build_out, "output directory");

  // train-teacher
  auto* train = app.add_subcommand("train-teacher", "train teacher policies on one group");
  std::string train_config, train_manifest, train_group, train_out = "teacher";
  std::string train_variant, train_resume;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--manifest", train_manifest, "task manifest")->required();
  train->add_option("--group", train_group, "group id")->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--variant", train_variant, "ippo or centralized-ppo");
  train->add_option("--resume", train_resume, "trainer state to resume from");
  train->add_option("--seed", train_seed, "seed override")
      ->each([&](const std::string&) { train_seed_set = true; });

  // distill
  auto* distill = app.add_subcommand("distill", "distill teachers into a point-cloud student");
  std::string dis_config, dis_manifest, dis_teacher, dis_group, dis_out = "student";
  std::int64_t dis_k = -1;
  std::uint64_t dis_seed = 0;
  bool dis_seed_set = false;
  distill->add_option("--config", dis_config, "run config JSON")->required();
  distill->add_option("--manifest", dis_manifest, "task manifest")->required();
  distill->add_option("--teacher-dir", dis_teacher, "teacher checkpoint directory")->required();
  distill->add_option("--group", dis_group, "group id")->required();
  distill->add_option("--out", dis_out, "output directory");
  distill->add_option("--K", dis_k, "future-conditioning steps override");
  distill->add_option("--seed", dis_seed, "seed override")
      ->each([&](const std::string&) { dis_seed_set = true; });

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint directory");
  std::string eval_config, eval_manifest, eval_ckpt, eval_out = "eval";
  bool eval_sweep = false;
  eval->add_option("--config", eval_config, "run config JSON")->required();
  eval->add_option("--manifest", eval_manifest, "task manifest")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--sweep", eval_sweep, "evaluate the full threshold sweep");

  // replay
  auto* replay = app.add_subcommand("replay", "dump an episode log as a table");
  std::string replay_log, replay_out = "replay.csv";
  replay->add_option("--log", replay_log, "episode log (JSON lines)")->required();
  replay->add_option("--out", replay_out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) {
      const bidex::RunConfig cfg = load_config_or_default(gen_config);
      bidex::pipeline_gen_demos(gen_count, gen_templates, gen_seed, cfg.scene,
                                gen_length, gen_out);
      std::printf("wrote %zu demos to %s\n", gen_count, gen_out.c_str());
    } else if (*build) {
      bidex::RunConfig cfg = bidex::load_run_config(build_config);
      if (!build_dataset.empty()) cfg.dataset_dir = build_dataset;
      const bidex::TaskSet set = bidex::pipeline_build_tasks(cfg, build_out);
      std::size_t valid = 0;
      for (const auto& e : set.entries) {
        if (e.valid) {
          ++valid;
        } else {
          std::printf("discarded %s: %s\n", e.task_id.c_str(),
                      e.invalid_reason.c_str());
        }
      }
      std::printf("tasks: %zu valid of %zu; groups: %zu\n", valid,
                  set.entries.size(), set.groups.size());
      if (valid == 0) return kExitValidation;
    } else if (*train) {
      bidex::RunConfig cfg = bidex::load_run_config(train_config);
      if (!train_variant.empty()) cfg.variant = train_variant;
      if (train_seed_set) cfg.seed = train_seed;
      const auto outcome = bidex::pipeline_train_teacher(
          cfg, train_manifest, train_group, train_out, train_resume);
      std::printf("teacher trained: %zu iterations, r1=%.4f r2=%.4f\n",
                  outcome.iterations, outcome.r1, outcome.r2);
    } else if (*distill) {
      bidex::RunConfig cfg = bidex::load_run_config(dis_config);
      if (dis_k >= 0) cfg.dagger.K = static_cast<std::size_t>(dis_k);
      if (dis_seed_set) cfg.seed = dis_seed;
      const auto outcome = bidex::pipeline_distill(cfg, dis_manifest, dis_teacher,
                                                   dis_group, dis_out);
      std::printf("student distilled: r1=%.4f r2=%.4f holdout_mse=%.6f\n",
                  outcome.r1, outcome.r2, outcome.holdout_mse);
    } else if (*eval) {
      const bidex::RunConfig cfg = bidex::load_run_config(eval_config);
      const bidex::EvalReport report = bidex::pipeline_evaluate(
          cfg, eval_manifest, eval_ckpt, eval_out, eval_sweep);
      for (const bidex::EvalRow& row : report.rows) {
        if (row.task_id == "ALL") {
          std::printf("%s eps=%.3f r1=%.4f r2=%.4f (n=%zu)\n",
                      row.split.c_str(), row.threshold, row.r1, row.r2, row.n);
        }
      }
    } else if (*replay) {
      bidex::pipeline_replay(replay_log, replay_out);
      std::printf("replay table written to %s\n", replay_out.c_str());
    }
  } catch (const bidex::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
