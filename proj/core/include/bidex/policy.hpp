#pragma once

#include <map>
#include <string>
#include <vector>

#include "bidex/nn.hpp"
#include "bidex/rng.hpp"

namespace bidex {

/// Diagonal-Gaussian actor plus a separate critic. The actor's tanh mean
/// keeps actions inside [-1, 1]; the log standard deviation is learnable,
/// state-independent, and clamped to [-5, 1] after every optimizer step.
struct ActorCritic {
  nn::Mlp actor;
  nn::Matrix log_std;  // action_dim x 1
  nn::Mlp critic;
  int obs_width = 0;
  int action_dim = 0;

  ActorCritic() = default;
  ActorCritic(int obs_width, int action_dim, const std::vector<int>& hidden,
              double log_std_init, RngStream& rng);

  std::vector<nn::ParamRef> params();
  nn::Matrix act_mean(const nn::Matrix& obs) const;
  nn::Matrix values(const nn::Matrix& obs) const;
  void clamp_log_std();
};

/// Point-cloud student: encoder plus an action trunk over
/// [proprioception | cloud feature | future positions].
struct StudentActor {
  nn::PointEncoder encoder;
  nn::Mlp trunk;
  int proprio_width = 0;
  int future_steps = 0;  // K
  int action_dim = 0;
  std::size_t cloud_points = 0;  // P

  StudentActor() = default;
  StudentActor(int proprio_width, int future_steps, std::size_t cloud_points,
               const nn::PointEncoderSpec& encoder_spec,
               const std::vector<int>& hidden, RngStream& rng);

  std::vector<nn::ParamRef> params();
  int trunk_input_width() const;
  /// proprio: N x proprio_width (+3K future columns appended); points:
  /// (N*P) x 3.
  nn::Matrix act_mean(const nn::Matrix& proprio_future,
                      const nn::Matrix& points) const;
};

/// Free-form metadata stored in the checkpoint header.
using CheckpointMeta = std::map<std::string, std::string>;

/// Binary container: magic, JSON header (layout descriptor, network spec,
/// precision, iteration, metadata), then little-endian fp64 arrays in layout
/// order. A .sha256 sidecar is written next to the file and verified on load.
void save_actor_critic(const ActorCritic& policy, const std::string& path,
                       std::uint64_t iteration, const CheckpointMeta& meta);
ActorCritic load_actor_critic(const std::string& path,
                              std::uint64_t* iteration = nullptr,
                              CheckpointMeta* meta = nullptr);

void save_student(const StudentActor& student, const std::string& path,
                  std::uint64_t iteration, const CheckpointMeta& meta);
StudentActor load_student(const std::string& path,
                          std::uint64_t* iteration = nullptr,
                          CheckpointMeta* meta = nullptr);

/// "gaussian_actor_critic" or "student_actor"; throws on unknown files.
std::string checkpoint_kind(const std::string& path);

}  // namespace bidex
