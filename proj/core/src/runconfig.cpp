#include "bidex/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bidex/hash.hpp"

namespace bidex {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) {
    throw ValidationError("config section " + where + " must be an object");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("unknown config key " + where + "." + it.key());
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it != obj.end()) out = it->get<T>();
}

void parse_scene(const json& j, SceneConfig& s) {
  check_keys(j, {"table_height", "object_spacing", "object_distance",
                 "hand_spacing", "hand_home_height", "hand_home_forward",
                 "episode_length", "control_dt", "max_step_translation",
                 "max_step_rotation", "max_step_closure", "c_grasp",
                 "c_release", "u_consecutive", "fall_speed", "table_clearance",
                 "delta_ref", "grasp_center_points"},
             "scene");
  read(j, "table_height", s.table_height);
  read(j, "object_spacing", s.object_spacing);
  read(j, "object_distance", s.object_distance);
  read(j, "hand_spacing", s.hand_spacing);
  read(j, "hand_home_height", s.hand_home_height);
  read(j, "hand_home_forward", s.hand_home_forward);
  read(j, "episode_length", s.episode_length);
  read(j, "control_dt", s.control_dt);
  read(j, "max_step_translation", s.max_step_translation);
  read(j, "max_step_rotation", s.max_step_rotation);
  read(j, "max_step_closure", s.max_step_closure);
  read(j, "c_grasp", s.c_grasp);
  read(j, "c_release", s.c_release);
  read(j, "u_consecutive", s.u_consecutive);
  read(j, "fall_speed", s.fall_speed);
  read(j, "table_clearance", s.table_clearance);
  read(j, "delta_ref", s.delta_ref);
  read(j, "grasp_center_points", s.grasp_center_points);
  if (s.episode_length < 1 || s.control_dt <= 0.0) {
    throw ValidationError("scene: episode_length and control_dt must be positive");
  }
  if (s.c_release >= s.c_grasp) {
    throw ValidationError("scene: c_release must stay below c_grasp");
  }
}

void parse_reward(const json& j, RewardWeights& w) {
  check_keys(j, {"w_r", "w_t", "w1", "w2", "w3", "w4", "w_q", "lambda_w",
                 "lambda_ft", "eps_succ", "f", "disable_stage1",
                 "use_geometric_center", "disable_bonus"},
             "reward");
  read(j, "w_r", w.w_r);
  read(j, "w_t", w.w_t);
  read(j, "w1", w.w1);
  read(j, "w2", w.w2);
  read(j, "w3", w.w3);
  read(j, "w4", w.w4);
  read(j, "w_q", w.w_q);
  read(j, "lambda_w", w.lambda_w);
  read(j, "lambda_ft", w.lambda_ft);
  read(j, "eps_succ", w.eps_succ);
  read(j, "f", w.f);
  read(j, "disable_stage1", w.disable_stage1);
  read(j, "use_geometric_center", w.use_geometric_center);
  read(j, "disable_bonus", w.disable_bonus);
  if (w.eps_succ <= 0.0) throw ValidationError("reward: eps_succ must be positive");
  if (w.f < 1) throw ValidationError("reward: f must be >= 1");
}

void parse_ppo(const json& j, PpoConfig& p) {
  check_keys(j, {"gamma", "gae_lambda", "clip", "rollout_steps", "epochs",
                 "minibatches", "learning_rate", "weight_decay", "num_envs",
                 "total_iterations", "value_coef", "entropy_coef",
                 "max_grad_norm", "reward_scale", "hidden", "log_std_init",
                 "checkpoint_every", "eval_every", "eval_episodes", "stop_r1",
                 "stop_r2"},
             "ppo");
  read(j, "gamma", p.gamma);
  read(j, "gae_lambda", p.gae_lambda);
  read(j, "clip", p.clip);
  read(j, "rollout_steps", p.rollout_steps);
  read(j, "epochs", p.epochs);
  read(j, "minibatches", p.minibatches);
  read(j, "learning_rate", p.learning_rate);
  read(j, "weight_decay", p.weight_decay);
  read(j, "num_envs", p.num_envs);
  read(j, "total_iterations", p.total_iterations);
  read(j, "value_coef", p.value_coef);
  read(j, "entropy_coef", p.entropy_coef);
  read(j, "max_grad_norm", p.max_grad_norm);
  read(j, "reward_scale", p.reward_scale);
  read(j, "hidden", p.hidden);
  read(j, "log_std_init", p.log_std_init);
  read(j, "checkpoint_every", p.checkpoint_every);
  read(j, "eval_every", p.eval_every);
  read(j, "eval_episodes", p.eval_episodes);
  read(j, "stop_r1", p.stop_r1);
  read(j, "stop_r2", p.stop_r2);
  if (!(p.gamma > 0.0 && p.gamma <= 1.0)) {
    throw ValidationError("ppo: gamma must be in (0, 1]");
  }
  if (!(p.gae_lambda >= 0.0 && p.gae_lambda <= 1.0)) {
    throw ValidationError("ppo: gae_lambda must be in [0, 1]");
  }
  if (p.clip <= 0.0) throw ValidationError("ppo: clip must be positive");
  if (p.num_envs < 1 || p.rollout_steps < 1) {
    throw ValidationError("ppo: num_envs and rollout_steps must be positive");
  }
}

void parse_dagger(const json& j, DaggerConfig& d) {
  check_keys(j, {"P", "K", "expert_mix_p", "noise_std", "rollout_steps",
                 "epochs", "minibatches", "minibatch_size", "learning_rate",
                 "weight_decay", "num_envs", "buffer_capacity",
                 "total_iterations", "max_grad_norm", "per_point_hidden",
                 "post_pool_hidden", "feature_dim", "hidden",
                 "presample_points", "eval_every", "eval_episodes", "stop_r2"},
             "dagger");
  read(j, "P", d.P);
  read(j, "K", d.K);
  read(j, "expert_mix_p", d.expert_mix_p);
  read(j, "noise_std", d.noise_std);
  read(j, "rollout_steps", d.rollout_steps);
  read(j, "epochs", d.epochs);
  read(j, "minibatches", d.minibatches);
  read(j, "minibatch_size", d.minibatch_size);
  read(j, "learning_rate", d.learning_rate);
  read(j, "weight_decay", d.weight_decay);
  read(j, "num_envs", d.num_envs);
  read(j, "buffer_capacity", d.buffer_capacity);
  read(j, "total_iterations", d.total_iterations);
  read(j, "max_grad_norm", d.max_grad_norm);
  read(j, "per_point_hidden", d.encoder.per_point);
  read(j, "post_pool_hidden", d.encoder.post_pool);
  read(j, "feature_dim", d.encoder.output_width);
  read(j, "hidden", d.hidden);
  read(j, "presample_points", d.presample_points);
  read(j, "eval_every", d.eval_every);
  read(j, "eval_episodes", d.eval_episodes);
  read(j, "stop_r2", d.stop_r2);
  if (!(d.expert_mix_p >= 0.0 && d.expert_mix_p <= 1.0)) {
    throw ValidationError("dagger: expert_mix_p must be in [0, 1]");
  }
  if (d.P < 1) throw ValidationError("dagger: P must be >= 1");
  if (d.P > d.presample_points) {
    throw ValidationError("dagger: P cannot exceed presample_points");
  }
}

void parse_bc(const json& j, BcConfig& b) {
  check_keys(j, {"hidden", "learning_rate", "weight_decay", "epochs",
                 "minibatch_size", "max_grad_norm", "log_std_init"},
             "bc");
  read(j, "hidden", b.hidden);
  read(j, "learning_rate", b.learning_rate);
  read(j, "weight_decay", b.weight_decay);
  read(j, "epochs", b.epochs);
  read(j, "minibatch_size", b.minibatch_size);
  read(j, "max_grad_norm", b.max_grad_norm);
  read(j, "log_std_init", b.log_std_init);
}

json scene_json(const SceneConfig& s) {
  return json{{"table_height", s.table_height},
              {"object_spacing", s.object_spacing},
              {"object_distance", s.object_distance},
              {"hand_spacing", s.hand_spacing},
              {"hand_home_height", s.hand_home_height},
              {"hand_home_forward", s.hand_home_forward},
              {"episode_length", s.episode_length},
              {"control_dt", s.control_dt},
              {"max_step_translation", s.max_step_translation},
              {"max_step_rotation", s.max_step_rotation},
              {"max_step_closure", s.max_step_closure},
              {"c_grasp", s.c_grasp},
              {"c_release", s.c_release},
              {"u_consecutive", s.u_consecutive},
              {"fall_speed", s.fall_speed},
              {"table_clearance", s.table_clearance},
              {"delta_ref", s.delta_ref},
              {"grasp_center_points", s.grasp_center_points}};
}

json reward_json(const RewardWeights& w) {
  return json{{"w_r", w.w_r},
              {"w_t", w.w_t},
              {"w1", w.w1},
              {"w2", w.w2},
              {"w3", w.w3},
              {"w4", w.w4},
              {"w_q", w.w_q},
              {"lambda_w", w.lambda_w},
              {"lambda_ft", w.lambda_ft},
              {"eps_succ", w.eps_succ},
              {"f", w.f},
              {"disable_stage1", w.disable_stage1},
              {"use_geometric_center", w.use_geometric_center},
              {"disable_bonus", w.disable_bonus}};
}

json ppo_json(const PpoConfig& p) {
  return json{{"gamma", p.gamma},
              {"gae_lambda", p.gae_lambda},
              {"clip", p.clip},
              {"rollout_steps", p.rollout_steps},
              {"epochs", p.epochs},
              {"minibatches", p.minibatches},
              {"learning_rate", p.learning_rate},
              {"weight_decay", p.weight_decay},
              {"num_envs", p.num_envs},
              {"total_iterations", p.total_iterations},
              {"value_coef", p.value_coef},
              {"entropy_coef", p.entropy_coef},
              {"max_grad_norm", p.max_grad_norm},
              {"reward_scale", p.reward_scale},
              {"hidden", p.hidden},
              {"log_std_init", p.log_std_init},
              {"checkpoint_every", p.checkpoint_every},
              {"eval_every", p.eval_every},
              {"eval_episodes", p.eval_episodes},
              {"stop_r1", p.stop_r1},
              {"stop_r2", p.stop_r2}};
}

json dagger_json(const DaggerConfig& d) {
  return json{{"P", d.P},
              {"K", d.K},
              {"expert_mix_p", d.expert_mix_p},
              {"noise_std", d.noise_std},
              {"rollout_steps", d.rollout_steps},
              {"epochs", d.epochs},
              {"minibatches", d.minibatches},
              {"minibatch_size", d.minibatch_size},
              {"learning_rate", d.learning_rate},
              {"weight_decay", d.weight_decay},
              {"num_envs", d.num_envs},
              {"buffer_capacity", d.buffer_capacity},
              {"total_iterations", d.total_iterations},
              {"max_grad_norm", d.max_grad_norm},
              {"per_point_hidden", d.encoder.per_point},
              {"post_pool_hidden", d.encoder.post_pool},
              {"feature_dim", d.encoder.output_width},
              {"hidden", d.hidden},
              {"presample_points", d.presample_points},
              {"eval_every", d.eval_every},
              {"eval_episodes", d.eval_episodes},
              {"stop_r2", d.stop_r2}};
}

json bc_json(const BcConfig& b) {
  return json{{"hidden", b.hidden},
              {"learning_rate", b.learning_rate},
              {"weight_decay", b.weight_decay},
              {"epochs", b.epochs},
              {"minibatch_size", b.minibatch_size},
              {"max_grad_norm", b.max_grad_norm},
              {"log_std_init", b.log_std_init}};
}

}  // namespace

EvalConfig RunConfig::eval_config() const {
  EvalConfig e;
  e.n_episodes = eval_episodes;
  e.eps_succ = reward.eps_succ;
  e.eps_track = eps_track;
  e.u_consecutive = scene.u_consecutive;
  e.f = reward.f;
  e.thresholds = thresholds;
  return e;
}

RunConfig run_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config is not valid JSON");
  check_keys(j,
             {"dataset", "output_dir", "seed", "variant", "train_fraction",
              "scene", "reward", "ppo", "dagger", "bc", "eval"},
             "$");
  RunConfig c;
  read(j, "dataset", c.dataset_dir);
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
  read(j, "variant", c.variant);
  read(j, "train_fraction", c.train_fraction);
  if (c.variant != "ippo" && c.variant != "centralized-ppo" && c.variant != "bc") {
    throw ValidationError("variant must be ippo, centralized-ppo, or bc");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must be in (0, 1)");
  }
  if (j.contains("scene")) parse_scene(j["scene"], c.scene);
  if (j.contains("reward")) parse_reward(j["reward"], c.reward);
  if (j.contains("ppo")) parse_ppo(j["ppo"], c.ppo);
  if (j.contains("dagger")) parse_dagger(j["dagger"], c.dagger);
  if (j.contains("bc")) parse_bc(j["bc"], c.bc);
  if (j.contains("eval")) {
    check_keys(j["eval"], {"n_episodes", "eps_track", "thresholds"}, "eval");
    read(j["eval"], "n_episodes", c.eval_episodes);
    read(j["eval"], "eps_track", c.eps_track);
    read(j["eval"], "thresholds", c.thresholds);
    for (std::size_t i = 1; i < c.thresholds.size(); ++i) {
      if (c.thresholds[i] <= c.thresholds[i - 1]) {
        throw ValidationError("eval.thresholds must be positive ascending");
      }
    }
    if (!c.thresholds.empty() && c.thresholds[0] <= 0.0) {
      throw ValidationError("eval.thresholds must be positive ascending");
    }
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset_dir;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["variant"] = c.variant;
  j["train_fraction"] = c.train_fraction;
  j["scene"] = scene_json(c.scene);
  j["reward"] = reward_json(c.reward);
  j["ppo"] = ppo_json(c.ppo);
  j["dagger"] = dagger_json(c.dagger);
  j["bc"] = bc_json(c.bc);
  j["eval"] = json{{"n_episodes", c.eval_episodes},
                   {"eps_track", c.eps_track},
                   {"thresholds", c.thresholds}};
  return j.dump(2);
}

std::string config_core_hash(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["variant"] = c.variant;
  j["train_fraction"] = c.train_fraction;
  j["scene"] = scene_json(c.scene);
  j["reward"] = reward_json(c.reward);
  j["ppo"] = ppo_json(c.ppo);
  j["dagger"] = dagger_json(c.dagger);
  j["bc"] = bc_json(c.bc);
  j["eval"] = json{{"n_episodes", c.eval_episodes},
                   {"eps_track", c.eps_track},
                   {"thresholds", c.thresholds}};
  return sha256_hex(j.dump());
}

void echo_effective_config(const RunConfig& config, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/effective_config.json", std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write effective config in " + out_dir);
  }
  out << run_config_to_json(config) << "\n";
}

}  // namespace bidex
