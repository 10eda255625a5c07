#include "bidex/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bidex/dagger.hpp"
#include "bidex/demo_gen.hpp"
#include "bidex/hash.hpp"
#include "bidex/ppo.hpp"

namespace bidex {

namespace fs = std::filesystem;
using nlohmann::json;

void pipeline_gen_demos(std::size_t count,
                        const std::vector<std::string>& template_names,
                        std::uint64_t seed, const SceneConfig& scene,
                        std::size_t length, const std::string& out_dir) {
  std::vector<MotionTemplate> templates;
  for (const std::string& name : template_names) {
    templates.push_back(parse_motion_template(name));  // throws on unknown
  }
  if (templates.empty()) {
    throw ValidationError("gen-demos: at least one template required");
  }
  const std::vector<DemoTrajectory> demos =
      synthesize_dataset(count, templates, seed, scene, length);

  fs::create_directories(out_dir);
  json manifest;
  manifest["seed"] = seed;
  json ids = json::array();
  for (const DemoTrajectory& demo : demos) {
    save_demo_file(demo, (fs::path(out_dir) / (demo.demo_id + ".json")).string());
    ids.push_back(demo.demo_id);
  }
  manifest["demos"] = std::move(ids);
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
}

TaskSet pipeline_build_tasks(const RunConfig& config,
                             const std::string& out_dir) {
  if (config.dataset_dir.empty()) {
    throw ValidationError("build-tasks: config has no dataset directory");
  }
  TaskSet set = build_task_set(config.dataset_dir, config.scene, config.reward,
                               config.train_fraction, config.seed);
  fs::create_directories(out_dir);
  save_task_manifest(set, config_core_hash(config),
                     (fs::path(out_dir) / "tasks.json").string());
  echo_effective_config(config, out_dir);
  return set;
}

namespace {

TaskGroup group_from_manifest(const RunConfig& config,
                              const std::string& manifest_path,
                              const std::string& group_id) {
  const TaskManifest manifest = load_task_manifest(manifest_path);
  if (manifest.config_hash != config_core_hash(config)) {
    throw ValidationError(
        "config hash mismatch between the manifest and the supplied config");
  }
  return load_task_group(manifest, config.dataset_dir, group_id, config.scene);
}

/// Restricts a group to its training-split tasks (teachers and students train
/// on those only). One-hot ids and the observation width stay aligned with
/// the full group.
TaskGroup training_subgroup(const TaskGroup& group,
                            const TaskManifest& manifest) {
  std::map<std::string, std::string> split_of;
  for (const TaskSetEntry& e : manifest.entries) split_of[e.task_id] = e.split_label;
  TaskGroup out;
  out.group_id = group.group_id;
  out.one_hot_width = group.width();
  for (const TaskSpec& t : group.tasks) {
    if (split_of[t.task_id] == "train") out.tasks.push_back(t);
  }
  if (out.tasks.empty()) {
    throw ValidationError("group " + group.group_id + " has no training tasks");
  }
  return out;
}

}  // namespace

TrainTeacherOutcome pipeline_train_teacher(const RunConfig& config,
                                           const std::string& manifest_path,
                                           const std::string& group_id,
                                           const std::string& out_dir,
                                           const std::string& resume_state) {
  const TaskManifest manifest = load_task_manifest(manifest_path);
  if (manifest.config_hash != config_core_hash(config)) {
    throw ValidationError(
        "config hash mismatch between the manifest and the supplied config");
  }
  TaskGroup full =
      load_task_group(manifest, config.dataset_dir, group_id, config.scene);
  // Teachers see the full group's one-hot width but train on the train split.
  const TaskGroup train_group = training_subgroup(full, manifest);

  echo_effective_config(config, out_dir);
  const std::string hash = config_core_hash(config);

  TeacherTrainResult result;
  if (config.variant == "centralized-ppo") {
    result = train_centralized_ppo(train_group, config.ppo, config.scene,
                                   config.reward, config.seed, out_dir, hash,
                                   resume_state);
  } else if (config.variant == "ippo") {
    result = train_ippo(train_group, config.ppo, config.scene, config.reward,
                        config.seed, out_dir, hash, resume_state);
  } else {
    throw ValidationError("train-teacher: variant must be ippo or centralized-ppo");
  }
  TrainTeacherOutcome outcome;
  outcome.r1 = result.final_r1;
  outcome.r2 = result.final_r2;
  outcome.iterations = result.iterations_run;
  return outcome;
}

DistillOutcome pipeline_distill(const RunConfig& config,
                                const std::string& manifest_path,
                                const std::string& teacher_dir,
                                const std::string& group_id,
                                const std::string& out_dir) {
  const TaskManifest manifest = load_task_manifest(manifest_path);
  if (manifest.config_hash != config_core_hash(config)) {
    throw ValidationError(
        "config hash mismatch between the manifest and the supplied config");
  }
  TaskGroup full =
      load_task_group(manifest, config.dataset_dir, group_id, config.scene);
  TaskGroup train_group = training_subgroup(full, manifest);

  const fs::path left_path = fs::path(teacher_dir) / "final_left.ckpt";
  const fs::path right_path = fs::path(teacher_dir) / "final_right.ckpt";
  if (!fs::exists(left_path) || !fs::exists(right_path)) {
    throw ValidationError("teacher checkpoints not found in " + teacher_dir);
  }
  CheckpointMeta meta;
  TeacherSet teachers;
  teachers.policies.emplace_back(load_actor_critic(left_path.string(), nullptr, &meta),
                                 load_actor_critic(right_path.string()));
  if (meta.count("config_hash") &&
      meta.at("config_hash") != config_core_hash(config)) {
    throw ValidationError("teacher checkpoint was produced under a different config");
  }
  for (const TaskSpec& t : full.tasks) teachers.by_task[t.task_id] = 0;

  echo_effective_config(config, out_dir);
  StudentTrainResult result =
      dagger_train(teachers, train_group, config.dagger, config.scene,
                   config.reward, config.seed, out_dir, config_core_hash(config));
  DistillOutcome outcome;
  outcome.r1 = result.final_r1;
  outcome.r2 = result.final_r2;
  outcome.holdout_mse = result.holdout_mse;
  return outcome;
}

void pipeline_train_bc(const RunConfig& config, const std::string& manifest_path,
                       const std::string& group_id, const std::string& out_dir) {
  const TaskManifest manifest = load_task_manifest(manifest_path);
  if (manifest.config_hash != config_core_hash(config)) {
    throw ValidationError(
        "config hash mismatch between the manifest and the supplied config");
  }
  TaskGroup full =
      load_task_group(manifest, config.dataset_dir, group_id, config.scene);
  TaskGroup train_group = training_subgroup(full, manifest);
  const BcDataset dataset =
      bc_build_dataset(train_group, config.scene, config.reward);
  const auto [left, right] = bc_train(dataset, config.bc, config.seed);
  fs::create_directories(out_dir);
  echo_effective_config(config, out_dir);
  CheckpointMeta meta{{"config_hash", config_core_hash(config)},
                      {"group_id", group_id},
                      {"seed", std::to_string(config.seed)},
                      {"variant", "bc"}};
  save_actor_critic(left, out_dir + "/bc_left.ckpt", 0, meta);
  save_actor_critic(right, out_dir + "/bc_right.ckpt", 0, meta);
}

namespace {

struct SplitTasks {
  std::map<std::string, std::vector<std::size_t>> by_split;  // task indices
};

SplitTasks split_tasks_of_group(const TaskGroup& group,
                                const TaskManifest& manifest) {
  std::map<std::string, std::string> split_of;
  for (const TaskSetEntry& e : manifest.entries) split_of[e.task_id] = e.split_label;
  SplitTasks out;
  for (std::size_t i = 0; i < group.tasks.size(); ++i) {
    out.by_split[split_of[group.tasks[i].task_id]].push_back(i);
  }
  return out;
}

}  // namespace

EvalReport pipeline_evaluate(const RunConfig& config,
                             const std::string& manifest_path,
                             const std::string& checkpoint_dir,
                             const std::string& out_dir, bool sweep) {
  const TaskManifest manifest = load_task_manifest(manifest_path);
  if (manifest.config_hash != config_core_hash(config)) {
    throw ValidationError(
        "config hash mismatch between the manifest and the supplied config");
  }

  enum class Kind { Teacher, Centralized, Bc, Student };
  const fs::path dir(checkpoint_dir);
  Kind kind;
  std::string left_file, right_file;
  if (fs::exists(dir / "student_left.ckpt")) {
    kind = Kind::Student;
    left_file = (dir / "student_left.ckpt").string();
    right_file = (dir / "student_right.ckpt").string();
  } else if (fs::exists(dir / "final_joint.ckpt")) {
    kind = Kind::Centralized;
    left_file = (dir / "final_joint.ckpt").string();
  } else if (fs::exists(dir / "bc_left.ckpt")) {
    kind = Kind::Bc;
    left_file = (dir / "bc_left.ckpt").string();
    right_file = (dir / "bc_right.ckpt").string();
  } else if (fs::exists(dir / "final_left.ckpt")) {
    kind = Kind::Teacher;
    left_file = (dir / "final_left.ckpt").string();
    right_file = (dir / "final_right.ckpt").string();
  } else {
    throw ValidationError("no recognizable checkpoints in " + checkpoint_dir);
  }

  CheckpointMeta meta;
  std::uint64_t iteration = 0;
  ActorCritic left_ac, right_ac;
  StudentActor left_st, right_st;
  if (kind == Kind::Student) {
    left_st = load_student(left_file, &iteration, &meta);
    right_st = load_student(right_file);
  } else {
    left_ac = load_actor_critic(left_file, &iteration, &meta);
    if (!right_file.empty()) right_ac = load_actor_critic(right_file);
  }
  if (!meta.count("config_hash") ||
      meta.at("config_hash") != config_core_hash(config)) {
    throw ValidationError(
        "checkpoint config hash does not match the supplied config");
  }
  const std::string group_id = meta.at("group_id");
  TaskGroup group =
      load_task_group(manifest, config.dataset_dir, group_id, config.scene);
  const SplitTasks splits = split_tasks_of_group(group, manifest);
  const EvalConfig eval = config.eval_config();

  EvalReport report;
  report.policy_id = fs::path(left_file).filename().string() + "@" +
                     std::to_string(iteration);
  report.config_hash = config_core_hash(config);

  std::vector<double> thresholds;
  if (sweep) {
    thresholds = eval.thresholds;
  } else {
    thresholds = {eval.eps_succ};
  }

  const std::vector<std::string> split_order = {"train", "test_comb", "test_new"};
  for (const std::string& split : split_order) {
    auto it = splits.by_split.find(split);
    if (it == splits.by_split.end() || it->second.empty()) continue;
    std::vector<EpisodeLog> split_logs;
    std::vector<std::pair<std::string, std::vector<EpisodeLog>>> task_logs;
    for (std::size_t idx : it->second) {
      TaskGroup single;
      single.group_id = group.group_id;
      single.one_hot_width = group.width();
      single.tasks.push_back(group.tasks[idx]);
      std::vector<EpisodeLog> logs;
      if (kind == Kind::Student) {
        evaluate_student(single, left_st, right_st, config.dagger, config.scene,
                         config.reward, eval.n_episodes, config.seed, &logs);
      } else {
        evaluate_teacher(single, left_ac,
                         kind == Kind::Centralized ? left_ac : right_ac,
                         kind == Kind::Centralized, config.scene, config.reward,
                         eval.n_episodes, config.seed, &logs);
      }
      task_logs.emplace_back(group.tasks[idx].task_id, logs);
      for (const EpisodeLog& log : logs) split_logs.push_back(log);
    }
    for (const auto& [task_id, logs] : task_logs) {
      for (double eps : thresholds) {
        EvalRow row;
        row.split = split;
        row.task_id = task_id;
        row.threshold = eps;
        row.r1 = eval_r1(logs, eps, eval.u_consecutive);
        row.r2 = eval_r2(logs, sweep ? eps : eval.eps_track, eval.f);
        row.n = logs.size();
        report.rows.push_back(row);
      }
    }
    for (double eps : thresholds) {
      EvalRow row;
      row.split = split;
      row.task_id = "ALL";
      row.threshold = eps;
      row.r1 = eval_r1(split_logs, eps, eval.u_consecutive);
      row.r2 = eval_r2(split_logs, sweep ? eps : eval.eps_track, eval.f);
      row.n = split_logs.size();
      report.rows.push_back(row);
    }
  }

  fs::create_directories(out_dir);
  save_report(report, (fs::path(out_dir) / "report.csv").string(),
              (fs::path(out_dir) / "report.json").string());
  return report;
}

void pipeline_replay(const std::string& log_path, const std::string& out_path) {
  const EpisodeLog log = load_episode_log(log_path);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write replay dump: " + out_path);
  out << "# task " << log.task_id << ", steps " << log.steps.size() << "\n";
  out << "t,stage,tool_x,tool_y,tool_z,object_x,object_y,object_z,"
         "left_wrist_z,right_wrist_z,reward_left,reward_right,"
         "tool_attached,object_attached\n";
  for (const EpisodeStepRecord& s : log.steps) {
    out << s.t << ',' << (s.stage == Stage::Tracking ? "tracking" : "aligning")
        << ',' << s.tool_pose.position.x << ',' << s.tool_pose.position.y
        << ',' << s.tool_pose.position.z << ',' << s.object_pose.position.x
        << ',' << s.object_pose.position.y << ',' << s.object_pose.position.z
        << ',' << s.left_wrist.position.z << ',' << s.right_wrist.position.z
        << ',' << s.reward_left.total << ',' << s.reward_right.total << ','
        << (s.tool_attached ? 1 : 0) << ',' << (s.object_attached ? 1 : 0)
        << "\n";
  }
}

}  // namespace bidex
