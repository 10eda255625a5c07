#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bidex/episode.hpp"
#include "bidex/geometry.hpp"
#include "bidex/reward.hpp"
#include "bidex/rng.hpp"
#include "bidex/scene.hpp"
#include "bidex/task.hpp"

namespace bidex {

/// Per-hand action: 3 wrist translation deltas, 3 wrist rotation deltas
/// (axis-scaled), 4 closure deltas, all in [-1, 1]. Components are clamped
/// before use.
using Action = std::array<double, kActionDim>;

struct HandState {
  Pose wrist_pose;
  Vec3 wrist_linear_velocity;
  Vec3 wrist_angular_velocity;
  std::array<double, kFingersPerHand> closure{};
  std::array<double, kFingersPerHand> closure_velocity{};

  double mean_closure() const;
  Vec3 fingertip(std::size_t finger) const;
  std::array<Vec3, kFingersPerHand> fingertips() const;
};

enum class Attachment { None = 0, Left = 1, Right = 2 };

struct ObjectState {
  Pose pose;
  Vec3 linear_velocity;
  Vec3 angular_velocity;
  Attachment attachment = Attachment::None;
  Pose attach_offset;  // object pose in the holding hand's frame
};

/// Full simulator snapshot. Single-owner: exactly one worker mutates a state.
struct EnvState {
  std::size_t t = 0;
  Stage stage = Stage::Aligning;
  std::size_t consec_success = 0;
  std::int64_t tracking_start_t = -1;  // -1 until alignment completes
  std::size_t t_since_tracking = 0;
  std::size_t current_track_index = 0;  // valid while tracking
  std::size_t group_count = 1;

  std::array<HandState, kNumSides> hands;
  ObjectState tool;
  ObjectState object;
  std::array<Action, kNumSides> prev_action{};
  bool done = false;

  const TaskSpec* task = nullptr;

  const HandState& hand(Side s) const { return hands[static_cast<int>(s)]; }
  HandState& hand(Side s) { return hands[static_cast<int>(s)]; }
  /// Left pairs with the target object, right with the tool.
  const ObjectState& paired_object(Side s) const {
    return s == Side::Left ? object : tool;
  }
  std::size_t group_size() const;
};

/// True when the wrist and summed fingertip distances to the grasp center are
/// inside the gates and the mean closure reaches the grasp threshold.
bool attach_check(const HandState& hand, const ObjectState& obj,
                  const Vec3& grasp_center_world, const RewardWeights& w,
                  double c_grasp);

struct StepFlags {
  Stage stage = Stage::Aligning;
  bool entered_tracking = false;
  std::size_t consec_success = 0;
  bool done = false;
};

struct StepResult {
  std::vector<double> obs_left;
  std::vector<double> obs_right;
  RewardBreakdown reward_left;
  RewardBreakdown reward_right;
  StepFlags flags;
};

/// Deterministic quasi-static two-hand environment.
class BimanualEnv {
 public:
  BimanualEnv(const TaskSpec& task, const SceneConfig& scene,
              const RewardWeights& weights, std::size_t group_size);

  /// Hands at home, closure zero, objects at the task initial poses.
  StepResult reset();

  /// Integrates one control step; throws std::logic_error when called on a
  /// finished episode.
  StepResult step(const Action& left, const Action& right);

  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }
  const TaskSpec& task() const { return *task_; }
  const SceneConfig& scene() const { return scene_; }
  const RewardWeights& weights() const { return weights_; }
  std::size_t group_size() const { return group_size_; }

  std::size_t teacher_obs_width() const;

  /// Scripted hooks used by replay validation: place hands or objects
  /// directly, bypassing action limits, then refresh attachments and
  /// attached-object poses. Wrist and object velocities follow by finite
  /// difference, as in stepping.
  void scripted_place_hand(Side side, const Pose& wrist, double closure);
  void scripted_place_objects(const Pose& tool, const Pose& object);

 private:
  void update_attachments();
  void settle_unattached(ObjectState& obj, const std::vector<Vec3>& points);
  void update_stage();

  const TaskSpec* task_;
  SceneConfig scene_;
  RewardWeights weights_;
  std::size_t group_size_;
  EnvState state_;
};

/// Teacher view: wrist pose, wrist velocities, closure, closure velocity,
/// fingertips, paired-object pose and velocities, one-hot task id, previous
/// own action.
std::vector<double> assemble_teacher_obs(const EnvState& state, Side side);

std::size_t teacher_obs_width(std::size_t group_size);

struct StudentObs {
  std::vector<double> proprio;          // teacher layout minus object state and id
  std::vector<Vec3> points;             // P cloud points, world frame
  std::vector<Vec3> future_positions;   // K upcoming demo positions
};

/// Point-cloud view with K-step future conditioning. Points are drawn without
/// replacement from the side's pre-sampled canonical cloud, posed, and
/// perturbed with isotropic Gaussian noise.
StudentObs assemble_student_obs(const EnvState& state, Side side,
                                const std::vector<Vec3>& presampled_canonical,
                                std::size_t P, std::size_t K, double noise_std,
                                RngStream& rng);

std::size_t student_proprio_width();

/// Policy hook used by evaluation rollouts; returns the executed action.
using PolicyFn =
    std::function<std::array<Action, kNumSides>(const EnvState&, RngStream&)>;

/// Full rollout under the supplied policy; per-step log for the eval harness.
EpisodeLog run_episode(BimanualEnv& env, const PolicyFn& policy,
                       RngStream& rng);

}  // namespace bidex
