#pragma once

#include <string>
#include <vector>

#include "bidex/evalharness.hpp"
#include "bidex/runconfig.hpp"
#include "bidex/task.hpp"

namespace bidex {

/// Writes count synthetic demo files plus the dataset manifest.
void pipeline_gen_demos(std::size_t count,
                        const std::vector<std::string>& template_names,
                        std::uint64_t seed, const SceneConfig& scene,
                        std::size_t length, const std::string& out_dir);

/// Builds, validates, and splits the task set; writes tasks.json into
/// out_dir and returns the set.
TaskSet pipeline_build_tasks(const RunConfig& config,
                             const std::string& out_dir);

struct TrainTeacherOutcome {
  double r1 = 0.0;
  double r2 = 0.0;
  std::size_t iterations = 0;
};

/// Trains the configured variant (ippo or centralized-ppo) on one group.
TrainTeacherOutcome pipeline_train_teacher(const RunConfig& config,
                                           const std::string& manifest_path,
                                           const std::string& group_id,
                                           const std::string& out_dir,
                                           const std::string& resume_state = "");

struct DistillOutcome {
  double r1 = 0.0;
  double r2 = 0.0;
  double holdout_mse = 0.0;
};

/// DAgger-distills the group's teacher checkpoints into a student pair.
DistillOutcome pipeline_distill(const RunConfig& config,
                                const std::string& manifest_path,
                                const std::string& teacher_dir,
                                const std::string& group_id,
                                const std::string& out_dir);

/// Trains the behavior-cloning baseline from scripted replays of the group.
void pipeline_train_bc(const RunConfig& config, const std::string& manifest_path,
                       const std::string& group_id, const std::string& out_dir);

/// Evaluates a checkpoint directory (teacher pair, centralized joint policy,
/// BC pair, or student pair) on its group's tasks, split section by split
/// section; writes report.csv / report.json into out_dir.
EvalReport pipeline_evaluate(const RunConfig& config,
                             const std::string& manifest_path,
                             const std::string& checkpoint_dir,
                             const std::string& out_dir, bool sweep);

/// Renders an episode log as a per-step text table.
void pipeline_replay(const std::string& log_path, const std::string& out_path);

}  // namespace bidex
