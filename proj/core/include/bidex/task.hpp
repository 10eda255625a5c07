#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bidex/demo.hpp"
#include "bidex/reward.hpp"
#include "bidex/scene.hpp"

namespace bidex {

/// One executable manipulation task constructed from a demonstration.
struct TaskSpec {
  std::string task_id;
  std::string demo_id;
  std::string group_id;
  std::size_t reference_index = 0;

  Pose tool_reference_pose;
  Pose object_reference_pose;
  /// Demo tool/object poses from the reference step to the end.
  std::vector<Pose> tool_track;
  std::vector<Pose> object_track;

  Vec3 grasp_center_tool;    // world frame at the reference pose
  Vec3 grasp_center_object;  // world frame at the reference pose
  /// The same grasp points expressed in each object's canonical frame; the
  /// simulator's attach test follows the object, while rewards keep the
  /// fixed world-frame centers above.
  Vec3 tool_grasp_local;
  Vec3 object_grasp_local;

  Pose initial_tool_pose;
  Pose initial_object_pose;

  std::size_t one_hot_id = 0;  // index within the group
  PrimitiveShape tool_shape;
  PrimitiveShape object_shape;
  std::vector<Vec3> tool_points;    // canonical frame, kDemoPointCount
  std::vector<Vec3> object_points;  // canonical frame, kDemoPointCount

  /// Demo wrist/fingertip track, kept for scripted replay and BC labeling.
  std::vector<DemoStep> demo_steps;

  std::size_t track_length() const { return tool_track.size(); }
};

struct TaskGroup {
  std::string group_id;
  std::vector<TaskSpec> tasks;
  /// One-hot width for observations; 0 means tasks.size(). Subgroups carved
  /// out of a larger group keep the parent's width so task ids stay aligned.
  std::size_t one_hot_width = 0;

  std::size_t width() const {
    return one_hot_width == 0 ? tasks.size() : one_hot_width;
  }
};

/// Builds a TaskSpec from a preprocessed demo. Throws std::runtime_error when
/// the reference step leaves no tracking trajectory.
TaskSpec build_task(const DemoTrajectory& demo, const SceneConfig& scene);

struct ReplayReport {
  bool valid = false;
  std::string reason;
  std::size_t first_failing_step = 0;
  double failure_distance = 0.0;
};

/// Scripted-teleport replay of the demo hands; checks that both grasps
/// engage at the reference step and that the tracked objects stay within
/// eps_succ of the demo poses.
ReplayReport replay_validate(const TaskSpec& task, const SceneConfig& scene,
                             const RewardWeights& weights);

struct TaskSetEntry {
  std::string task_id;
  std::string demo_file;
  std::string group_id;
  std::string split_label;  // "train" | "test_comb" | "test_new"
  bool valid = false;
  std::string content_hash;
  std::string invalid_reason;
};

struct TaskSet {
  std::vector<TaskGroup> groups;
  TaskSplit split;
  std::vector<TaskSetEntry> entries;  // includes discarded demos
};

/// Parses every demo in the dataset directory, preprocesses, builds, replays,
/// discards invalid tasks, groups, and splits. Throws std::runtime_error when
/// no valid task remains.
TaskSet build_task_set(const std::string& dataset_dir, const SceneConfig& scene,
                       const RewardWeights& weights, double train_fraction,
                       std::uint64_t seed);

/// Task-set manifest JSON (one entry per demo, valid or not).
std::string serialize_task_manifest(const TaskSet& set,
                                    const std::string& config_hash);
void save_task_manifest(const TaskSet& set, const std::string& config_hash,
                        const std::string& path);

struct TaskManifest {
  std::vector<TaskSetEntry> entries;
  std::string config_hash;
};

TaskManifest load_task_manifest(const std::string& path);

/// Rebuilds the named group's tasks from the manifest's demo files.
TaskGroup load_task_group(const TaskManifest& manifest,
                          const std::string& dataset_dir,
                          const std::string& group_id,
                          const SceneConfig& scene);

std::vector<std::string> manifest_group_ids(const TaskManifest& manifest);

}  // namespace bidex
