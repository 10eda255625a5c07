#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bidex/env.hpp"
#include "bidex/policy.hpp"
#include "bidex/ppo.hpp"
#include "bidex/task.hpp"

namespace bidex {

struct DaggerConfig {
  std::size_t P = 512;  // cloud points per observation
  std::size_t K = 5;    // future conditioning steps
  double expert_mix_p = 0.05;
  double noise_std = 0.003;  // m, cloud perturbation
  std::size_t rollout_steps = 8;
  std::size_t epochs = 5;
  std::size_t minibatches = 4;
  std::size_t minibatch_size = 256;
  double learning_rate = 3e-4;
  double weight_decay = 0.0;
  std::size_t num_envs = 32;
  std::size_t buffer_capacity = 200000;  // per side, FIFO
  std::size_t total_iterations = 150;
  double max_grad_norm = 1.0;
  nn::PointEncoderSpec encoder;
  std::vector<int> hidden = {128, 128, 64, 64};
  std::size_t presample_points = 4096;
  std::size_t eval_every = 25;
  std::size_t eval_episodes = 4;
  double stop_r2 = 0.0;  // early stop; non-positive disables
};

/// One labeled student observation.
struct DaggerSample {
  std::vector<double> proprio;
  std::vector<Vec3> points;
  std::vector<Vec3> future;
  Action label{};
};

/// Fixed-capacity FIFO: pushing past capacity evicts the oldest sample.
class SampleBuffer {
 public:
  explicit SampleBuffer(std::size_t capacity);
  void push(DaggerSample sample);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const DaggerSample& at(std::size_t i) const;  // 0 = oldest

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  std::vector<DaggerSample> data_;
};

/// Per-task expert lookup. Group-level teachers map every task to the same
/// policy pair.
struct TeacherSet {
  std::vector<std::pair<ActorCritic, ActorCritic>> policies;
  std::map<std::string, std::size_t> by_task;

  const std::pair<ActorCritic, ActorCritic>& for_task(
      const std::string& task_id) const;
};

/// Teacher's deterministic mean action for the side's teacher-format view of
/// the state.
Action label_with_expert(const ActorCritic& teacher, const EnvState& state,
                         Side side);

struct StudentIterationLog {
  std::size_t iteration = 0;
  double mse_left = 0.0;
  double mse_right = 0.0;
  double executed_expert_fraction = 0.0;
  bool evaluated = false;
  double r1 = 0.0;
  double r2 = 0.0;
};

struct StudentTrainResult {
  StudentActor left;
  StudentActor right;
  std::vector<StudentIterationLog> logs;
  double final_r1 = 0.0;
  double final_r2 = 0.0;
  double holdout_mse = 0.0;
  std::size_t iterations_run = 0;
};

/// DAgger distillation: students roll the environments (expert actions mixed
/// in with probability expert_mix_p), experts label every visited state, and
/// both action heads regress the labels with minibatch MSE epochs over the
/// FIFO buffer. One-hot task ids never enter student inputs.
StudentTrainResult dagger_train(const TeacherSet& teachers,
                                const TaskGroup& group,
                                const DaggerConfig& config,
                                const SceneConfig& scene,
                                const RewardWeights& weights,
                                std::uint64_t seed,
                                const std::string& out_dir = "",
                                const std::string& config_hash = "");

/// Deterministic student evaluation (cloud sampling still stochastic, driven
/// by the per-episode stream).
std::pair<double, double> evaluate_student(
    const TaskGroup& group, const StudentActor& left, const StudentActor& right,
    const DaggerConfig& config, const SceneConfig& scene,
    const RewardWeights& weights, std::size_t episodes_per_task,
    std::uint64_t seed, std::vector<EpisodeLog>* logs_out = nullptr);

struct BcConfig {
  std::vector<int> hidden = {128, 128, 64, 64};
  double learning_rate = 3e-4;
  double weight_decay = 0.0;
  std::size_t epochs = 200;
  std::size_t minibatch_size = 256;
  double max_grad_norm = 1.0;
  double log_std_init = -0.5;
};

/// (teacher-format observation, replayed action) pairs per side.
using BcDataset =
    std::array<std::vector<std::pair<std::vector<double>, Action>>, 2>;

/// Builds the behavior-cloning dataset by scripted replay of the group's
/// demos, labeling each state with the clamped action that reproduces the
/// next demonstrated wrist pose and closure.
BcDataset bc_build_dataset(const TaskGroup& group, const SceneConfig& scene,
                           const RewardWeights& weights);

/// Plain supervised regression on the static dataset; no environment
/// interaction. Throws std::invalid_argument on an empty dataset.
std::pair<ActorCritic, ActorCritic> bc_train(
    const BcDataset& dataset, const BcConfig& config, std::uint64_t seed,
    std::vector<double>* loss_history = nullptr);

}  // namespace bidex
