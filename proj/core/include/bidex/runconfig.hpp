#pragma once

#include <string>

#include "bidex/dagger.hpp"
#include "bidex/evalharness.hpp"
#include "bidex/ppo.hpp"
#include "bidex/reward.hpp"
#include "bidex/scene.hpp"

namespace bidex {

/// Raised for malformed configs, CLI misuse, and schema violations; the CLI
/// maps it to exit code 1 (runtime failures exit 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Whole-pipeline configuration. The stage thresholds u and f live once, in
/// the scene and reward sections, and feed training and evaluation alike.
struct RunConfig {
  std::string dataset_dir;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  std::string variant = "ippo";  // ippo | centralized-ppo | bc
  double train_fraction = 0.8;
  SceneConfig scene;
  RewardWeights reward;
  PpoConfig ppo;
  DaggerConfig dagger;
  BcConfig bc;
  std::size_t eval_episodes = 32;
  double eps_track = 0.1;
  std::vector<double> thresholds = {0.05, 0.075, 0.1};

  EvalConfig eval_config() const;
};

/// Strict parse: unknown keys are rejected, values are range-checked.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

/// Digest of the sections that determine artifact content (everything except
/// filesystem locations); embedded in manifests, checkpoints, and reports.
std::string config_core_hash(const RunConfig& config);

/// Writes the effective configuration into the output directory.
void echo_effective_config(const RunConfig& config, const std::string& out_dir);

}  // namespace bidex
