#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bidex/env.hpp"
#include "bidex/nn.hpp"
#include "bidex/policy.hpp"
#include "bidex/task.hpp"

namespace bidex {

struct PpoConfig {
  double gamma = 0.96;
  double gae_lambda = 0.95;
  double clip = 0.2;
  std::size_t rollout_steps = 8;
  std::size_t epochs = 5;
  std::size_t minibatches = 4;
  double learning_rate = 3e-4;
  double weight_decay = 0.0;
  std::size_t num_envs = 64;
  std::size_t total_iterations = 500;
  double value_coef = 0.5;
  double entropy_coef = 0.001;
  double max_grad_norm = 1.0;
  /// Rewards are multiplied by this factor before advantage estimation so
  /// critic targets stay near unit scale; normalized advantages make the
  /// policy update invariant to it.
  double reward_scale = 0.05;
  std::vector<int> hidden = {128, 128, 64, 64};
  double log_std_init = -0.5;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::size_t eval_every = 25;
  std::size_t eval_episodes = 1;
  /// Early-stop targets checked at evaluation points; non-positive disables.
  double stop_r1 = 0.0;
  double stop_r2 = 0.0;
};

/// Batch of environments over one task group; tasks are assigned round-robin
/// and environments auto-reset when an episode finishes.
class VecEnv {
 public:
  VecEnv(const TaskGroup& group, const SceneConfig& scene,
         const RewardWeights& weights, std::uint64_t seed,
         std::size_t num_envs);

  void reset_all();
  /// Steps every environment; returns per-side total rewards and done flags
  /// in fixed env order. Auto-resets finished episodes after recording.
  void step(const nn::Matrix& actions_left, const nn::Matrix& actions_right,
            nn::Vector* reward_left, nn::Vector* reward_right,
            std::vector<std::uint8_t>* done, std::vector<std::uint8_t>* stage);

  const nn::Matrix& obs(Side side) const {
    return side == Side::Left ? obs_left_ : obs_right_;
  }
  std::size_t size() const { return envs_.size(); }
  std::size_t obs_width() const { return obs_width_; }
  BimanualEnv& env(std::size_t i) { return *envs_[i]; }
  RngStream& rng(std::size_t i) { return rngs_[i]; }
  const TaskGroup& group() const { return *group_; }

 private:
  void refresh_obs(std::size_t i);

  const TaskGroup* group_;
  std::vector<std::unique_ptr<BimanualEnv>> envs_;
  std::vector<RngStream> rngs_;
  std::size_t obs_width_ = 0;
  nn::Matrix obs_left_;
  nn::Matrix obs_right_;
};

/// Experience for one agent, steps-major: row s * num_envs + e.
struct RolloutBatch {
  std::size_t steps = 0;
  std::size_t num_envs = 0;
  nn::Matrix obs;
  nn::Matrix actions;
  nn::Vector log_probs;
  nn::Matrix rewards;         // steps x envs
  nn::Matrix values;          // steps x envs
  Eigen::MatrixXi dones;      // steps x envs
  Eigen::MatrixXi stages;     // steps x envs
  nn::Vector bootstrap_value; // envs
  nn::Matrix advantages;      // steps x envs
  nn::Matrix returns;         // steps x envs
};

/// Reverse-scan generalized advantage estimation with done masking;
/// returns = advantages + values.
void compute_gae(const nn::Matrix& rewards, const nn::Matrix& values,
                 const Eigen::MatrixXi& dones, const nn::Vector& bootstrap,
                 double gamma, double lam, nn::Matrix* advantages,
                 nn::Matrix* returns);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

/// Clipped-surrogate update: whole-batch advantage normalization, shuffled
/// minibatch epochs, gradient-norm clipping. Throws on non-finite losses.
UpdateStats ppo_update(ActorCritic& policy, nn::AdamW& optimizer,
                       const RolloutBatch& batch, const PpoConfig& config,
                       RngStream& shuffle_rng);

struct IterationLog {
  std::size_t iteration = 0;
  double mean_reward_left = 0.0;
  double mean_reward_right = 0.0;
  bool evaluated = false;
  double r1 = 0.0;
  double r2 = 0.0;
  UpdateStats stats_left;
  UpdateStats stats_right;
  double wall_time_s = 0.0;
};

struct TeacherTrainResult {
  ActorCritic left;
  ActorCritic right;          // unused for the centralized variant
  bool centralized = false;
  std::vector<IterationLog> logs;
  double final_r1 = 0.0;
  double final_r2 = 0.0;
  std::size_t iterations_run = 0;
};

/// Independent PPO: both agents learn from their own observations and their
/// own per-side total reward. When out_dir is nonempty, checkpoints, the
/// JSONL training log, and a resumable trainer state land there.
TeacherTrainResult train_ippo(const TaskGroup& group, const PpoConfig& config,
                              const SceneConfig& scene,
                              const RewardWeights& weights, std::uint64_t seed,
                              const std::string& out_dir = "",
                              const std::string& config_hash = "",
                              const std::string& resume_state = "");

/// Single policy over the concatenated observations emitting the 20-D joint
/// action, trained on the sum of both sides' rewards.
TeacherTrainResult train_centralized_ppo(const TaskGroup& group,
                                         const PpoConfig& config,
                                         const SceneConfig& scene,
                                         const RewardWeights& weights,
                                         std::uint64_t seed,
                                         const std::string& out_dir = "",
                                         const std::string& config_hash = "",
                                         const std::string& resume_state = "");

/// Deterministic-mean evaluation of a teacher pair over the group's tasks;
/// returns (r1, r2) at the weights' thresholds and optionally the logs.
std::pair<double, double> evaluate_teacher(
    const TaskGroup& group, const ActorCritic& left, const ActorCritic& right,
    bool centralized, const SceneConfig& scene, const RewardWeights& weights,
    std::size_t episodes_per_task, std::uint64_t seed,
    std::vector<EpisodeLog>* logs_out = nullptr);

}  // namespace bidex
