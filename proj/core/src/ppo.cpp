#include "bidex/ppo.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bidex/evalharness.hpp"
#include "bidex/threads.hpp"

namespace bidex {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

Action row_to_action(const nn::Matrix& m, Eigen::Index row,
                     Eigen::Index offset = 0) {
  Action a;
  for (std::size_t j = 0; j < kActionDim; ++j) {
    a[j] = m(row, offset + static_cast<Eigen::Index>(j));
  }
  return a;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

VecEnv::VecEnv(const TaskGroup& group, const SceneConfig& scene,
               const RewardWeights& weights, std::uint64_t seed,
               std::size_t num_envs)
    : group_(&group) {
  if (group.tasks.empty()) {
    throw std::invalid_argument("VecEnv: empty task group");
  }
  obs_width_ = teacher_obs_width(group.width());
  envs_.reserve(num_envs);
  for (std::size_t e = 0; e < num_envs; ++e) {
    const TaskSpec& task = group.tasks[e % group.tasks.size()];
    envs_.push_back(
        std::make_unique<BimanualEnv>(task, scene, weights, group.width()));
    rngs_.emplace_back(seed, 0x9000ull + e);
  }
  obs_left_.resize(static_cast<Eigen::Index>(num_envs),
                   static_cast<Eigen::Index>(obs_width_));
  obs_right_.resize(static_cast<Eigen::Index>(num_envs),
                    static_cast<Eigen::Index>(obs_width_));
  reset_all();
}

void VecEnv::refresh_obs(std::size_t i) {
  const EnvState& s = envs_[i]->state();
  const std::vector<double> left = assemble_teacher_obs(s, Side::Left);
  const std::vector<double> right = assemble_teacher_obs(s, Side::Right);
  obs_left_.row(static_cast<Eigen::Index>(i)) =
      Eigen::Map<const nn::Vector>(left.data(), static_cast<Eigen::Index>(left.size()));
  obs_right_.row(static_cast<Eigen::Index>(i)) =
      Eigen::Map<const nn::Vector>(right.data(), static_cast<Eigen::Index>(right.size()));
}

void VecEnv::reset_all() {
  parallel_for(envs_.size(), [&](std::size_t i) {
    envs_[i]->reset();
    refresh_obs(i);
  });
}

void VecEnv::step(const nn::Matrix& actions_left, const nn::Matrix& actions_right,
                  nn::Vector* reward_left, nn::Vector* reward_right,
                  std::vector<std::uint8_t>* done,
                  std::vector<std::uint8_t>* stage) {
  const std::size_t n = envs_.size();
  parallel_for(n, [&](std::size_t i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    const StepResult r = envs_[i]->step(row_to_action(actions_left, row),
                                        row_to_action(actions_right, row));
    if (reward_left) (*reward_left)(row) = r.reward_left.total;
    if (reward_right) (*reward_right)(row) = r.reward_right.total;
    if (done) (*done)[i] = r.flags.done ? 1 : 0;
    if (stage) (*stage)[i] = r.flags.stage == Stage::Tracking ? 1 : 0;
    if (r.flags.done) envs_[i]->reset();
    refresh_obs(i);
  });
}

void compute_gae(const nn::Matrix& rewards, const nn::Matrix& values,
                 const Eigen::MatrixXi& dones, const nn::Vector& bootstrap,
                 double gamma, double lam, nn::Matrix* advantages,
                 nn::Matrix* returns) {
  const Eigen::Index S = rewards.rows();
  const Eigen::Index N = rewards.cols();
  if (values.rows() != S || values.cols() != N || dones.rows() != S ||
      dones.cols() != N || bootstrap.size() != N) {
    throw std::invalid_argument("compute_gae: shape mismatch");
  }
  advantages->resize(S, N);
  returns->resize(S, N);
  nn::Vector last_gae = nn::Vector::Zero(N);
  for (Eigen::Index t = S - 1; t >= 0; --t) {
    for (Eigen::Index e = 0; e < N; ++e) {
      const double mask = dones(t, e) ? 0.0 : 1.0;
      const double next_value = t + 1 < S ? values(t + 1, e) : bootstrap(e);
      const double delta =
          rewards(t, e) + gamma * next_value * mask - values(t, e);
      last_gae(e) = delta + gamma * lam * mask * last_gae(e);
      (*advantages)(t, e) = last_gae(e);
    }
  }
  *returns = *advantages + values;
}

namespace {

/// Per-sample Gaussian log density at the stored action.
nn::Vector gaussian_log_prob(const nn::Matrix& actions, const nn::Matrix& mean,
                             const nn::Vector& log_std) {
  const Eigen::Index n = actions.rows();
  const Eigen::Index d = actions.cols();
  nn::Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = -0.5 * static_cast<double>(d) * kLog2Pi;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sigma = std::exp(log_std(j));
      const double z = (actions(i, j) - mean(i, j)) / sigma;
      lp += -0.5 * z * z - log_std(j);
    }
    out(i) = lp;
  }
  return out;
}

double gaussian_entropy(const nn::Vector& log_std) {
  const double d = static_cast<double>(log_std.size());
  return log_std.sum() + 0.5 * d * (kLog2Pi + 1.0);
}

}  // namespace

UpdateStats ppo_update(ActorCritic& policy, nn::AdamW& optimizer,
                       const RolloutBatch& batch, const PpoConfig& config,
                       RngStream& shuffle_rng) {
  const Eigen::Index total =
      static_cast<Eigen::Index>(batch.steps * batch.num_envs);
  const Eigen::Index act_dim = batch.actions.cols();

  // Whole-batch advantage normalization, epsilon-guarded.
  nn::Vector adv_flat(total);
  nn::Vector ret_flat(total);
  for (std::size_t s = 0; s < batch.steps; ++s) {
    for (std::size_t e = 0; e < batch.num_envs; ++e) {
      const Eigen::Index row = static_cast<Eigen::Index>(s * batch.num_envs + e);
      adv_flat(row) = batch.advantages(static_cast<Eigen::Index>(s),
                                       static_cast<Eigen::Index>(e));
      ret_flat(row) = batch.returns(static_cast<Eigen::Index>(s),
                                    static_cast<Eigen::Index>(e));
    }
  }
  const double adv_mean = adv_flat.mean();
  const double adv_std = std::sqrt(
      (adv_flat.array() - adv_mean).square().sum() / static_cast<double>(total));
  adv_flat = (adv_flat.array() - adv_mean) / (adv_std + 1e-8);

  std::vector<std::size_t> order(static_cast<std::size_t>(total));
  UpdateStats stats;
  std::size_t n_updates = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffled_indices(order.size(), shuffle_rng, order.data());
    for (std::size_t mb = 0; mb < config.minibatches; ++mb) {
      const std::size_t lo = mb * order.size() / config.minibatches;
      const std::size_t hi = (mb + 1) * order.size() / config.minibatches;
      const Eigen::Index m = static_cast<Eigen::Index>(hi - lo);
      if (m == 0) continue;

      nn::Matrix mb_obs(m, batch.obs.cols());
      nn::Matrix mb_actions(m, act_dim);
      nn::Vector mb_logp_old(m), mb_adv(m), mb_ret(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index src = static_cast<Eigen::Index>(order[lo + k]);
        mb_obs.row(k) = batch.obs.row(src);
        mb_actions.row(k) = batch.actions.row(src);
        mb_logp_old(k) = batch.log_probs(src);
        mb_adv(k) = adv_flat(src);
        mb_ret(k) = ret_flat(src);
      }

      nn::Mlp::Cache actor_cache, critic_cache;
      const nn::Matrix mean = policy.actor.forward(mb_obs, &actor_cache);
      const nn::Vector values =
          policy.critic.forward(mb_obs, &critic_cache).col(0);
      const nn::Vector log_std = policy.log_std.col(0);
      const nn::Vector logp_new =
          gaussian_log_prob(mb_actions, mean, log_std);

      nn::Vector log_ratio = logp_new - mb_logp_old;
      nn::Vector ratio = log_ratio.array().exp();

      double policy_loss = 0.0;
      double clip_count = 0.0;
      double kl = 0.0;
      nn::Vector dlogp = nn::Vector::Zero(m);
      const double inv_m = 1.0 / static_cast<double>(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double r = ratio(i);
        const double a = mb_adv(i);
        const double unclipped = -a * r;
        const double clipped =
            -a * std::clamp(r, 1.0 - config.clip, 1.0 + config.clip);
        policy_loss += std::max(unclipped, clipped) * inv_m;
        if (unclipped >= clipped) dlogp(i) = -a * r * inv_m;
        if (std::abs(r - 1.0) > config.clip) clip_count += 1.0;
        kl += (r - 1.0 - log_ratio(i)) * inv_m;
      }

      const nn::Vector v_err = values - mb_ret;
      const double value_loss = config.value_coef * v_err.squaredNorm() * inv_m;
      const double entropy = gaussian_entropy(log_std);
      const double loss =
          policy_loss + value_loss - config.entropy_coef * entropy;
      if (!std::isfinite(loss)) {
        throw std::runtime_error("ppo_update: non-finite loss");
      }

      // Analytic gradients through the Gaussian head.
      nn::Matrix d_mean(m, act_dim);
      nn::Vector d_log_std = nn::Vector::Zero(act_dim);
      for (Eigen::Index j = 0; j < act_dim; ++j) {
        const double sigma = std::exp(log_std(j));
        const double inv_var = 1.0 / (sigma * sigma);
        for (Eigen::Index i = 0; i < m; ++i) {
          const double diff = mb_actions(i, j) - mean(i, j);
          d_mean(i, j) = dlogp(i) * diff * inv_var;
          d_log_std(j) += dlogp(i) * (diff * diff * inv_var - 1.0);
        }
        d_log_std(j) -= config.entropy_coef;
      }
      nn::Matrix d_values(m, 1);
      d_values.col(0) = config.value_coef * 2.0 * inv_m * v_err;

      nn::GradList actor_grads;
      policy.actor.backward(actor_cache, d_mean, actor_grads);
      actor_grads.push_back(d_log_std);
      nn::GradList critic_grads;
      policy.critic.backward(critic_cache, d_values, critic_grads);

      const double norm_a = nn::clip_grad_norm(actor_grads, config.max_grad_norm);
      const double norm_c = nn::clip_grad_norm(critic_grads, config.max_grad_norm);
      const double norm = std::max(norm_a, norm_c);
      nn::GradList grads = std::move(actor_grads);
      for (nn::Matrix& g : critic_grads) grads.push_back(std::move(g));
      optimizer.step(grads);
      policy.clamp_log_std();

      stats.policy_loss += policy_loss;
      stats.value_loss += value_loss;
      stats.entropy += entropy;
      stats.kl += kl;
      stats.clip_fraction += clip_count * inv_m;
      stats.grad_norm += norm;
      n_updates += 1;
    }
  }
  if (n_updates > 0) {
    const double inv = 1.0 / static_cast<double>(n_updates);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.kl *= inv;
    stats.clip_fraction *= inv;
    stats.grad_norm *= inv;
  }
  return stats;
}

namespace {

/// Runtime for one PPO agent (one side, or the centralized joint agent).
struct AgentRt {
  ActorCritic policy;
  std::unique_ptr<nn::AdamW> optimizer;
  RolloutBatch batch;

  AgentRt(int obs_width, int action_dim, const PpoConfig& config,
          RngStream& init_rng)
      : policy(obs_width, action_dim, config.hidden, config.log_std_init,
               init_rng) {
    nn::AdamWConfig oc;
    oc.learning_rate = config.learning_rate;
    oc.weight_decay = config.weight_decay;
    optimizer = std::make_unique<nn::AdamW>(policy.params(), oc);
    const Eigen::Index rows =
        static_cast<Eigen::Index>(config.rollout_steps * config.num_envs);
    batch.steps = config.rollout_steps;
    batch.num_envs = config.num_envs;
    batch.obs.resize(rows, obs_width);
    batch.actions.resize(rows, action_dim);
    batch.log_probs.resize(rows);
    batch.rewards.resize(static_cast<Eigen::Index>(config.rollout_steps),
                         static_cast<Eigen::Index>(config.num_envs));
    batch.values.resize(batch.rewards.rows(), batch.rewards.cols());
    batch.dones.resize(batch.rewards.rows(), batch.rewards.cols());
    batch.stages.resize(batch.rewards.rows(), batch.rewards.cols());
    batch.bootstrap_value.resize(static_cast<Eigen::Index>(config.num_envs));
  }
};

void check_finite_obs(const nn::Matrix& obs, const char* side) {
  if (obs.allFinite()) return;
  for (Eigen::Index e = 0; e < obs.rows(); ++e) {
    if (!obs.row(e).allFinite()) {
      throw std::runtime_error(std::string("non-finite observation in env ") +
                               std::to_string(e) + " (" + side + ")");
    }
  }
}

struct TrainerIo {
  std::ofstream log;
  std::string out_dir;
  bool enabled = false;
};

json rng_json(const RngStream& rng) {
  return json{{"seed", rng.seed()},
              {"stream", rng.stream_id()},
              {"counter", rng.counter()}};
}

json pose_json(const Pose& p) {
  return json::array({p.position.x, p.position.y, p.position.z,
                      p.orientation.w, p.orientation.x, p.orientation.y,
                      p.orientation.z});
}

Pose pose_from(const json& j) {
  Pose p;
  p.position = Vec3{j.at(0).get<double>(), j.at(1).get<double>(),
                    j.at(2).get<double>()};
  p.orientation = UnitQuat(j.at(3).get<double>(), j.at(4).get<double>(),
                           j.at(5).get<double>(), j.at(6).get<double>());
  return p;
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) {
  return Vec3{j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>()};
}

json env_state_json(const EnvState& s) {
  json j;
  j["t"] = s.t;
  j["stage"] = s.stage == Stage::Tracking ? 1 : 0;
  j["consec"] = s.consec_success;
  j["tracking_start"] = s.tracking_start_t;
  j["t_since"] = s.t_since_tracking;
  j["track_index"] = s.current_track_index;
  j["done"] = s.done;
  j["task_id"] = s.task->task_id;
  for (int i = 0; i < kNumSides; ++i) {
    json h;
    const HandState& hand = s.hands[i];
    h["wrist"] = pose_json(hand.wrist_pose);
    h["lin_vel"] = vec3_json(hand.wrist_linear_velocity);
    h["ang_vel"] = vec3_json(hand.wrist_angular_velocity);
    h["closure"] = hand.closure;
    h["closure_vel"] = hand.closure_velocity;
    j["hands"].push_back(std::move(h));
    j["prev_action"].push_back(s.prev_action[i]);
  }
  auto obj_json = [&](const ObjectState& o) {
    json oj;
    oj["pose"] = pose_json(o.pose);
    oj["lin_vel"] = vec3_json(o.linear_velocity);
    oj["ang_vel"] = vec3_json(o.angular_velocity);
    oj["attachment"] = static_cast<int>(o.attachment);
    oj["attach_offset"] = pose_json(o.attach_offset);
    return oj;
  };
  j["tool"] = obj_json(s.tool);
  j["object"] = obj_json(s.object);
  return j;
}

void env_state_from_json(const json& j, EnvState& s) {
  s.t = j.at("t").get<std::size_t>();
  s.stage = j.at("stage").get<int>() == 1 ? Stage::Tracking : Stage::Aligning;
  s.consec_success = j.at("consec").get<std::size_t>();
  s.tracking_start_t = j.at("tracking_start").get<std::int64_t>();
  s.t_since_tracking = j.at("t_since").get<std::size_t>();
  s.current_track_index = j.at("track_index").get<std::size_t>();
  s.done = j.at("done").get<bool>();
  for (int i = 0; i < kNumSides; ++i) {
    const json& h = j.at("hands").at(i);
    HandState& hand = s.hands[i];
    hand.wrist_pose = pose_from(h.at("wrist"));
    hand.wrist_linear_velocity = vec3_from(h.at("lin_vel"));
    hand.wrist_angular_velocity = vec3_from(h.at("ang_vel"));
    hand.closure = h.at("closure").get<std::array<double, kFingersPerHand>>();
    hand.closure_velocity =
        h.at("closure_vel").get<std::array<double, kFingersPerHand>>();
    s.prev_action[i] = j.at("prev_action").at(i).get<Action>();
  }
  auto obj_from = [&](const json& oj, ObjectState& o) {
    o.pose = pose_from(oj.at("pose"));
    o.linear_velocity = vec3_from(oj.at("lin_vel"));
    o.angular_velocity = vec3_from(oj.at("ang_vel"));
    o.attachment = static_cast<Attachment>(oj.at("attachment").get<int>());
    o.attach_offset = pose_from(oj.at("attach_offset"));
  };
  obj_from(j.at("tool"), s.tool);
  obj_from(j.at("object"), s.object);
}

constexpr char kStateMagic[8] = {'B', 'D', 'X', 'S', 'T', 'A', 'T', '1'};

void save_trainer_state(const std::string& path, std::size_t iteration,
                        bool centralized, const RngStream& shuffle_rng,
                        VecEnv& venv, std::vector<AgentRt*> agents,
                        const std::string& config_hash) {
  json header;
  header["iteration"] = iteration;
  header["centralized"] = centralized;
  header["config_hash"] = config_hash;
  header["shuffle_rng"] = rng_json(shuffle_rng);
  for (std::size_t e = 0; e < venv.size(); ++e) {
    header["env_rngs"].push_back(rng_json(venv.rng(e)));
    header["envs"].push_back(env_state_json(venv.env(e).state()));
  }
  for (AgentRt* a : agents) {
    header["agents"].push_back(
        json{{"opt_steps", a->optimizer->step_count()}});
  }
  const std::string hbytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trainer state: " + path);
  out.write(kStateMagic, sizeof(kStateMagic));
  const std::uint64_t hlen = hbytes.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hbytes.data(), static_cast<std::streamsize>(hbytes.size()));
  for (AgentRt* a : agents) {
    for (const nn::ParamRef& p : a->policy.params()) {
      out.write(reinterpret_cast<const char*>(p.value->data()),
                static_cast<std::streamsize>(sizeof(double) * p.value->size()));
    }
    for (const nn::Matrix& m : a->optimizer->first_moments()) {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    for (const nn::Matrix& m : a->optimizer->second_moments()) {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
  }
  if (!out) throw std::runtime_error("trainer state write failed: " + path);
}

std::size_t load_trainer_state(const std::string& path, bool centralized,
                               RngStream& shuffle_rng, VecEnv& venv,
                               std::vector<AgentRt*> agents) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trainer state: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(kStateMagic)) != 0) {
    throw std::runtime_error("not a trainer state file: " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hbytes(hlen, '\0');
  in.read(hbytes.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hbytes);
  if (header.at("centralized").get<bool>() != centralized) {
    throw std::runtime_error("trainer state variant mismatch: " + path);
  }
  if (header.at("envs").size() != venv.size()) {
    throw std::runtime_error("trainer state env count mismatch: " + path);
  }
  for (std::size_t e = 0; e < venv.size(); ++e) {
    const json& rj = header.at("env_rngs").at(e);
    venv.rng(e) = RngStream(rj.at("seed").get<std::uint64_t>(),
                            rj.at("stream").get<std::uint64_t>());
    venv.rng(e).set_counter(rj.at("counter").get<std::uint64_t>());
    const json& ej = header.at("envs").at(e);
    EnvState& s = venv.env(e).mutable_state();
    if (ej.at("task_id").get<std::string>() != s.task->task_id) {
      throw std::runtime_error("trainer state task binding mismatch: " + path);
    }
    env_state_from_json(ej, s);
  }
  const json& sj = header.at("shuffle_rng");
  shuffle_rng = RngStream(sj.at("seed").get<std::uint64_t>(),
                          sj.at("stream").get<std::uint64_t>());
  shuffle_rng.set_counter(sj.at("counter").get<std::uint64_t>());
  for (std::size_t ai = 0; ai < agents.size(); ++ai) {
    AgentRt* a = agents[ai];
    for (nn::ParamRef& p : a->policy.params()) {
      in.read(reinterpret_cast<char*>(p.value->data()),
              static_cast<std::streamsize>(sizeof(double) * p.value->size()));
    }
    for (nn::Matrix& m : a->optimizer->first_moments()) {
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    for (nn::Matrix& m : a->optimizer->second_moments()) {
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    a->optimizer->set_step_count(
        header.at("agents").at(ai).at("opt_steps").get<std::size_t>());
  }
  if (!in) throw std::runtime_error("truncated trainer state: " + path);
  return header.at("iteration").get<std::size_t>();
}

/// Samples actions from the Gaussian heads using each env's own stream; the
/// log-density is taken pre-clamping.
void sample_batch_actions(const std::vector<AgentRt*>& agents,
                          const std::vector<const nn::Matrix*>& obs,
                          VecEnv& venv, std::vector<nn::Matrix>& actions,
                          std::vector<nn::Vector>& log_probs) {
  const Eigen::Index n = static_cast<Eigen::Index>(venv.size());
  std::vector<nn::Matrix> means(agents.size());
  for (std::size_t a = 0; a < agents.size(); ++a) {
    means[a] = agents[a]->policy.act_mean(*obs[a]);
    actions[a].resize(n, means[a].cols());
    log_probs[a].resize(n);
  }
  for (Eigen::Index e = 0; e < n; ++e) {
    RngStream& rng = venv.rng(static_cast<std::size_t>(e));
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const nn::Vector log_std = agents[a]->policy.log_std.col(0);
      const Eigen::Index d = means[a].cols();
      double lp = -0.5 * static_cast<double>(d) * kLog2Pi;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = rng.next_gaussian();
        actions[a](e, j) = means[a](e, j) + std::exp(log_std(j)) * z;
        lp += -0.5 * z * z - log_std(j);
      }
      log_probs[a](e) = lp;
    }
  }
}

TeacherTrainResult train_teacher_impl(const TaskGroup& group,
                                      const PpoConfig& config,
                                      const SceneConfig& scene,
                                      const RewardWeights& weights,
                                      std::uint64_t seed, bool centralized,
                                      const std::string& out_dir,
                                      const std::string& config_hash,
                                      const std::string& resume_state) {
  VecEnv venv(group, scene, weights, seed, config.num_envs);
  const int obs_w = static_cast<int>(venv.obs_width());

  RngStream init_rng(seed, 0x11ull);
  std::vector<std::unique_ptr<AgentRt>> agents_store;
  if (centralized) {
    agents_store.push_back(std::make_unique<AgentRt>(
        2 * obs_w, 2 * static_cast<int>(kActionDim), config, init_rng));
  } else {
    agents_store.push_back(std::make_unique<AgentRt>(
        obs_w, static_cast<int>(kActionDim), config, init_rng));
    agents_store.push_back(std::make_unique<AgentRt>(
        obs_w, static_cast<int>(kActionDim), config, init_rng));
  }
  std::vector<AgentRt*> agents;
  for (auto& a : agents_store) agents.push_back(a.get());

  RngStream shuffle_rng(seed, 0x12ull);
  std::size_t start_iteration = 0;
  if (!resume_state.empty()) {
    start_iteration =
        load_trainer_state(resume_state, centralized, shuffle_rng, venv, agents);
    // Rebuild current observations from the restored env states.
    for (std::size_t e = 0; e < venv.size(); ++e) {
      if (venv.env(e).state().done) venv.env(e).reset();
    }
  }

  TrainerIo io;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto mode = start_iteration > 0 ? std::ios::app : std::ios::trunc;
    io.log.open(out_dir + "/train_log.jsonl", mode);
    io.out_dir = out_dir;
    io.enabled = true;
  }

  // The centralized agent sees both observations side by side.
  nn::Matrix joint_obs;
  auto gather_obs = [&](std::size_t agent) -> const nn::Matrix& {
    if (!centralized) {
      return venv.obs(agent == 0 ? Side::Left : Side::Right);
    }
    joint_obs.resize(static_cast<Eigen::Index>(venv.size()), 2 * obs_w);
    joint_obs.leftCols(obs_w) = venv.obs(Side::Left);
    joint_obs.rightCols(obs_w) = venv.obs(Side::Right);
    return joint_obs;
  };

  TeacherTrainResult result;
  result.centralized = centralized;
  const double start_time = now_seconds();
  std::vector<nn::Matrix> actions(agents.size());
  std::vector<nn::Vector> log_probs(agents.size());
  nn::Vector reward_left(static_cast<Eigen::Index>(venv.size()));
  nn::Vector reward_right(static_cast<Eigen::Index>(venv.size()));
  std::vector<std::uint8_t> done(venv.size());
  std::vector<std::uint8_t> stage(venv.size());

  auto save_checkpoints = [&](const std::string& tag) {
    if (!io.enabled) return;
    CheckpointMeta meta{{"config_hash", config_hash},
                        {"group_id", group.group_id},
                        {"seed", std::to_string(seed)},
                        {"variant", centralized ? "centralized-ppo" : "ippo"}};
    if (centralized) {
      save_actor_critic(agents[0]->policy, io.out_dir + "/" + tag + "_joint.ckpt",
                        result.iterations_run, meta);
    } else {
      save_actor_critic(agents[0]->policy, io.out_dir + "/" + tag + "_left.ckpt",
                        result.iterations_run, meta);
      save_actor_critic(agents[1]->policy,
                        io.out_dir + "/" + tag + "_right.ckpt",
                        result.iterations_run, meta);
    }
  };

  for (std::size_t iteration = start_iteration;
       iteration < config.total_iterations; ++iteration) {
    const double iter_start = now_seconds();

    // -- rollout collection -- //
    for (std::size_t s = 0; s < config.rollout_steps; ++s) {
      std::vector<nn::Matrix> step_obs(agents.size());
      std::vector<const nn::Matrix*> step_obs_ptr(agents.size());
      for (std::size_t a = 0; a < agents.size(); ++a) {
        step_obs[a] = gather_obs(a);
        check_finite_obs(step_obs[a],
                         centralized ? "joint" : (a == 0 ? "left" : "right"));
        const Eigen::Index row0 = static_cast<Eigen::Index>(s * venv.size());
        agents[a]->batch.obs.middleRows(
            row0, static_cast<Eigen::Index>(venv.size())) = step_obs[a];
        agents[a]->batch.values.row(static_cast<Eigen::Index>(s)) =
            agents[a]->policy.values(step_obs[a]).col(0).transpose();
        step_obs_ptr[a] = &step_obs[a];
      }
      sample_batch_actions(agents, step_obs_ptr, venv, actions, log_probs);
      for (std::size_t a = 0; a < agents.size(); ++a) {
        const Eigen::Index row0 = static_cast<Eigen::Index>(s * venv.size());
        agents[a]->batch.actions.middleRows(
            row0, static_cast<Eigen::Index>(venv.size())) = actions[a];
        agents[a]->batch.log_probs.segment(
            row0, static_cast<Eigen::Index>(venv.size())) = log_probs[a];
      }

      if (centralized) {
        venv.step(actions[0].leftCols(kActionDim),
                  actions[0].rightCols(kActionDim), &reward_left, &reward_right,
                  &done, &stage);
      } else {
        venv.step(actions[0], actions[1], &reward_left, &reward_right, &done,
                  &stage);
      }
      for (std::size_t e = 0; e < venv.size(); ++e) {
        const Eigen::Index se = static_cast<Eigen::Index>(s);
        const Eigen::Index ee = static_cast<Eigen::Index>(e);
        if (centralized) {
          agents[0]->batch.rewards(se, ee) = reward_left(ee) + reward_right(ee);
        } else {
          agents[0]->batch.rewards(se, ee) = reward_left(ee);
          agents[1]->batch.rewards(se, ee) = reward_right(ee);
        }
        for (AgentRt* a : agents) {
          a->batch.dones(se, ee) = done[e] ? 1 : 0;
          a->batch.stages(se, ee) = stage[e] ? 1 : 0;
        }
      }
    }
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const nn::Matrix& o = gather_obs(a);
      agents[a]->batch.bootstrap_value = agents[a]->policy.values(o).col(0);
      compute_gae(config.reward_scale * agents[a]->batch.rewards,
                  agents[a]->batch.values,
                  agents[a]->batch.dones, agents[a]->batch.bootstrap_value,
                  config.gamma, config.gae_lambda,
                  &agents[a]->batch.advantages, &agents[a]->batch.returns);
    }

    // -- updates -- //
    IterationLog log;
    log.iteration = iteration + 1;
    try {
      for (std::size_t a = 0; a < agents.size(); ++a) {
        const UpdateStats st = ppo_update(agents[a]->policy, *agents[a]->optimizer,
                                          agents[a]->batch, config, shuffle_rng);
        if (a == 0) log.stats_left = st;
        if (a == 1 || centralized) log.stats_right = st;
      }
    } catch (const std::exception&) {
      result.iterations_run = iteration + 1;
      save_checkpoints("abort");
      throw;
    }
    result.iterations_run = iteration + 1;
    log.mean_reward_left = centralized ? agents[0]->batch.rewards.mean()
                                       : agents[0]->batch.rewards.mean();
    log.mean_reward_right = centralized ? agents[0]->batch.rewards.mean()
                                        : agents[1]->batch.rewards.mean();

    bool stop = false;
    const bool eval_now =
        config.eval_every > 0 && ((iteration + 1) % config.eval_every == 0 ||
                                  iteration + 1 == config.total_iterations);
    if (eval_now) {
      const auto [r1, r2] = evaluate_teacher(
          group, agents[0]->policy,
          centralized ? agents[0]->policy : agents[1 % agents.size()]->policy,
          centralized, scene, weights, config.eval_episodes, seed);
      log.evaluated = true;
      log.r1 = r1;
      log.r2 = r2;
      result.final_r1 = r1;
      result.final_r2 = r2;
      const bool r1_target = config.stop_r1 > 0.0;
      const bool r2_target = config.stop_r2 > 0.0;
      if ((r1_target || r2_target) && (!r1_target || r1 >= config.stop_r1) &&
          (!r2_target || r2 >= config.stop_r2)) {
        stop = true;
      }
    }
    log.wall_time_s = now_seconds() - iter_start;
    result.logs.push_back(log);

    if (io.enabled) {
      json jl{{"iteration", log.iteration},
              {"mean_reward_left", log.mean_reward_left},
              {"mean_reward_right", log.mean_reward_right},
              {"policy_loss_left", log.stats_left.policy_loss},
              {"policy_loss_right", log.stats_right.policy_loss},
              {"value_loss_left", log.stats_left.value_loss},
              {"value_loss_right", log.stats_right.value_loss},
              {"kl_left", log.stats_left.kl},
              {"kl_right", log.stats_right.kl},
              {"clip_fraction_left", log.stats_left.clip_fraction},
              {"clip_fraction_right", log.stats_right.clip_fraction},
              {"wall_time", log.wall_time_s},
              {"elapsed", now_seconds() - start_time}};
      if (log.evaluated) {
        jl["r1"] = log.r1;
        jl["r2"] = log.r2;
      }
      io.log << jl.dump() << "\n";
      io.log.flush();
      if (config.checkpoint_every > 0 &&
          (iteration + 1) % config.checkpoint_every == 0) {
        save_checkpoints("iter" + std::to_string(iteration + 1));
        save_trainer_state(io.out_dir + "/trainer_state.bin", iteration + 1,
                           centralized, shuffle_rng, venv, agents, config_hash);
      }
    }
    if (stop) break;
  }

  save_checkpoints("final");
  if (io.enabled) {
    save_trainer_state(io.out_dir + "/trainer_state.bin", result.iterations_run,
                       centralized, shuffle_rng, venv, agents, config_hash);
  }

  result.left = std::move(agents[0]->policy);
  if (!centralized) result.right = std::move(agents[1]->policy);
  return result;
}

}  // namespace

TeacherTrainResult train_ippo(const TaskGroup& group, const PpoConfig& config,
                              const SceneConfig& scene,
                              const RewardWeights& weights, std::uint64_t seed,
                              const std::string& out_dir,
                              const std::string& config_hash,
                              const std::string& resume_state) {
  return train_teacher_impl(group, config, scene, weights, seed, false, out_dir,
                            config_hash, resume_state);
}

TeacherTrainResult train_centralized_ppo(
    const TaskGroup& group, const PpoConfig& config, const SceneConfig& scene,
    const RewardWeights& weights, std::uint64_t seed, const std::string& out_dir,
    const std::string& config_hash, const std::string& resume_state) {
  return train_teacher_impl(group, config, scene, weights, seed, true, out_dir,
                            config_hash, resume_state);
}

std::pair<double, double> evaluate_teacher(
    const TaskGroup& group, const ActorCritic& left, const ActorCritic& right,
    bool centralized, const SceneConfig& scene, const RewardWeights& weights,
    std::size_t episodes_per_task, std::uint64_t seed,
    std::vector<EpisodeLog>* logs_out) {
  const std::size_t total = group.tasks.size() * episodes_per_task;
  std::vector<EpisodeLog> logs(total);

  PolicyFn policy = [&](const EnvState& state, RngStream&) {
    std::array<Action, kNumSides> out;
    const std::vector<double> obs_l = assemble_teacher_obs(state, Side::Left);
    const std::vector<double> obs_r = assemble_teacher_obs(state, Side::Right);
    if (centralized) {
      nn::Matrix joint(1, static_cast<Eigen::Index>(obs_l.size() + obs_r.size()));
      for (std::size_t i = 0; i < obs_l.size(); ++i) {
        joint(0, static_cast<Eigen::Index>(i)) = obs_l[i];
      }
      for (std::size_t i = 0; i < obs_r.size(); ++i) {
        joint(0, static_cast<Eigen::Index>(obs_l.size() + i)) = obs_r[i];
      }
      const nn::Matrix mean = left.act_mean(joint);
      out[0] = row_to_action(mean, 0, 0);
      out[1] = row_to_action(mean, 0, static_cast<Eigen::Index>(kActionDim));
    } else {
      nn::Matrix ml(1, static_cast<Eigen::Index>(obs_l.size()));
      nn::Matrix mr(1, static_cast<Eigen::Index>(obs_r.size()));
      for (std::size_t i = 0; i < obs_l.size(); ++i) {
        ml(0, static_cast<Eigen::Index>(i)) = obs_l[i];
      }
      for (std::size_t i = 0; i < obs_r.size(); ++i) {
        mr(0, static_cast<Eigen::Index>(i)) = obs_r[i];
      }
      out[0] = row_to_action(left.act_mean(ml), 0);
      out[1] = row_to_action(right.act_mean(mr), 0);
    }
    return out;
  };

  parallel_for(total, [&](std::size_t k) {
    const std::size_t task_idx = k / episodes_per_task;
    BimanualEnv env(group.tasks[task_idx], scene, weights, group.width());
    RngStream rng(seed, 0xE000ull + k);
    logs[k] = run_episode(env, policy, rng);
  });

  const double r1 = eval_r1(logs, weights.eps_succ, scene.u_consecutive);
  const double r2 = eval_r2(logs, weights.eps_succ, weights.f);
  if (logs_out) *logs_out = std::move(logs);
  return {r1, r2};
}

}  // namespace bidex
