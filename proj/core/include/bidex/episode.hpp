#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bidex/geometry.hpp"
#include "bidex/reward.hpp"

namespace bidex {

/// One simulation step as recorded for evaluation and replay dumps.
struct EpisodeStepRecord {
  std::size_t t = 0;
  Stage stage = Stage::Aligning;
  Pose tool_pose;
  Pose object_pose;
  Pose left_wrist;
  Pose right_wrist;
  RewardBreakdown reward_left;
  RewardBreakdown reward_right;
  bool tool_attached = false;
  bool object_attached = false;
};

/// Self-contained episode record: the header carries the reference poses and
/// the demo tracking positions so metrics can be recomputed from the file
/// alone.
struct EpisodeLog {
  std::string task_id;
  Vec3 tool_reference_position;
  Vec3 object_reference_position;
  std::vector<Vec3> tool_track_positions;
  std::vector<Vec3> object_track_positions;
  std::vector<EpisodeStepRecord> steps;

  /// First step index whose stage is Tracking, or -1 when alignment never
  /// completed.
  std::int64_t tracking_start() const;
};

/// JSON-lines: a header record followed by one record per step.
void save_episode_log(const EpisodeLog& log, const std::string& path);
EpisodeLog load_episode_log(const std::string& path);
std::string episode_log_to_jsonl(const EpisodeLog& log);
EpisodeLog episode_log_from_jsonl(const std::string& text);

}  // namespace bidex
