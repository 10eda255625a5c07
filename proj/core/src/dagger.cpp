#include "bidex/dagger.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "bidex/evalharness.hpp"
#include "bidex/threads.hpp"

namespace bidex {

using nlohmann::json;

SampleBuffer::SampleBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw std::invalid_argument("SampleBuffer: capacity must be positive");
  }
  data_.resize(capacity_);
}

void SampleBuffer::push(DaggerSample sample) {
  data_[head_] = std::move(sample);
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) size_ += 1;
}

const DaggerSample& SampleBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("SampleBuffer::at");
  const std::size_t oldest = size_ < capacity_ ? 0 : head_;
  return data_[(oldest + i) % capacity_];
}

const std::pair<ActorCritic, ActorCritic>& TeacherSet::for_task(
    const std::string& task_id) const {
  auto it = by_task.find(task_id);
  if (it == by_task.end() || it->second >= policies.size()) {
    throw std::runtime_error("no teacher checkpoint for task " + task_id);
  }
  return policies[it->second];
}

Action label_with_expert(const ActorCritic& teacher, const EnvState& state,
                         Side side) {
  const std::vector<double> obs = assemble_teacher_obs(state, side);
  if (static_cast<int>(obs.size()) != teacher.obs_width) {
    throw std::runtime_error(
        "teacher checkpoint width mismatch: expected " +
        std::to_string(teacher.obs_width) + ", state provides " +
        std::to_string(obs.size()));
  }
  nn::Matrix m(1, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = obs[i];
  }
  const nn::Matrix mean = teacher.act_mean(m);
  Action a;
  for (std::size_t j = 0; j < kActionDim; ++j) {
    a[j] = mean(0, static_cast<Eigen::Index>(j));
  }
  return a;
}

namespace {

/// 4096-point canonical supersets per task and side, resampled from the
/// shape descriptors with task-indexed streams.
struct TaskClouds {
  std::vector<std::vector<Vec3>> object_cloud;  // index: task position in group
  std::vector<std::vector<Vec3>> tool_cloud;
};

TaskClouds presample_clouds(const TaskGroup& group, std::size_t n,
                            std::uint64_t seed) {
  TaskClouds clouds;
  clouds.object_cloud.resize(group.tasks.size());
  clouds.tool_cloud.resize(group.tasks.size());
  for (std::size_t i = 0; i < group.tasks.size(); ++i) {
    RngStream obj_rng(seed, 0xC100ull + 2 * i);
    RngStream tool_rng(seed, 0xC100ull + 2 * i + 1);
    clouds.object_cloud[i] =
        sample_surface_points(group.tasks[i].object_shape, n, obj_rng);
    clouds.tool_cloud[i] =
        sample_surface_points(group.tasks[i].tool_shape, n, tool_rng);
  }
  return clouds;
}

std::size_t task_index_in_group(const TaskGroup& group,
                                const std::string& task_id) {
  for (std::size_t i = 0; i < group.tasks.size(); ++i) {
    if (group.tasks[i].task_id == task_id) return i;
  }
  throw std::runtime_error("task not in group: " + task_id);
}

/// Packs a student observation into the trainer's row format.
void pack_student_row(const StudentObs& obs, Eigen::Index row,
                      nn::Matrix& proprio_future, nn::Matrix& points,
                      std::size_t P) {
  Eigen::Index c = 0;
  for (double v : obs.proprio) proprio_future(row, c++) = v;
  for (const Vec3& f : obs.future_positions) {
    proprio_future(row, c++) = f.x;
    proprio_future(row, c++) = f.y;
    proprio_future(row, c++) = f.z;
  }
  const Eigen::Index base = row * static_cast<Eigen::Index>(P);
  for (std::size_t p = 0; p < P; ++p) {
    points(base + static_cast<Eigen::Index>(p), 0) = obs.points[p].x;
    points(base + static_cast<Eigen::Index>(p), 1) = obs.points[p].y;
    points(base + static_cast<Eigen::Index>(p), 2) = obs.points[p].z;
  }
}

Action clamp_action_unit(const Action& a) {
  Action out;
  for (std::size_t i = 0; i < kActionDim; ++i) {
    out[i] = std::clamp(a[i], -1.0, 1.0);
  }
  return out;
}

struct MinibatchViews {
  nn::Matrix proprio_future;
  nn::Matrix points;
  nn::Matrix labels;
};

void fill_minibatch(const SampleBuffer& buffer, const std::vector<std::size_t>& idx,
                    std::size_t P, std::size_t proprio_w, std::size_t K,
                    MinibatchViews& mb) {
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  mb.proprio_future.resize(m, static_cast<Eigen::Index>(proprio_w + 3 * K));
  mb.points.resize(m * static_cast<Eigen::Index>(P), 3);
  mb.labels.resize(m, static_cast<Eigen::Index>(kActionDim));
  for (Eigen::Index r = 0; r < m; ++r) {
    const DaggerSample& s = buffer.at(idx[static_cast<std::size_t>(r)]);
    StudentObs view;
    view.proprio = s.proprio;
    view.points = s.points;
    view.future_positions = s.future;
    pack_student_row(view, r, mb.proprio_future, mb.points, P);
    for (std::size_t j = 0; j < kActionDim; ++j) {
      mb.labels(r, static_cast<Eigen::Index>(j)) = s.label[j];
    }
  }
}

/// One supervised step on the student; returns the minibatch MSE.
double student_update(StudentActor& student, nn::AdamW& optimizer,
                      const MinibatchViews& mb, double max_grad_norm) {
  const Eigen::Index m = mb.labels.rows();
  nn::PointEncoder::Cache enc_cache;
  const nn::Matrix feat = student.encoder.forward(
      mb.points, static_cast<Eigen::Index>(student.cloud_points), &enc_cache);

  nn::Matrix input(m, student.trunk_input_width());
  input.leftCols(student.proprio_width) =
      mb.proprio_future.leftCols(student.proprio_width);
  input.middleCols(student.proprio_width, feat.cols()) = feat;
  if (student.future_steps > 0) {
    input.rightCols(3 * student.future_steps) =
        mb.proprio_future.rightCols(3 * student.future_steps);
  }
  nn::Mlp::Cache trunk_cache;
  const nn::Matrix mean = student.trunk.forward(input, &trunk_cache);

  const nn::Matrix err = mean - mb.labels;
  const double denom = static_cast<double>(err.size());
  const double mse = err.squaredNorm() / denom;
  if (!std::isfinite(mse)) {
    throw std::runtime_error("student regression produced a non-finite loss");
  }

  nn::GradList trunk_grads;
  const nn::Matrix d_input =
      student.trunk.backward(trunk_cache, (2.0 / denom) * err, trunk_grads);
  nn::GradList grads;
  student.encoder.backward(
      enc_cache, d_input.middleCols(student.proprio_width, feat.cols()), grads);
  for (nn::Matrix& g : trunk_grads) grads.push_back(std::move(g));
  nn::clip_grad_norm(grads, max_grad_norm);
  optimizer.step(grads);
  return mse;
}

}  // namespace

StudentTrainResult dagger_train(const TeacherSet& teachers,
                                const TaskGroup& group,
                                const DaggerConfig& config,
                                const SceneConfig& scene,
                                const RewardWeights& weights,
                                std::uint64_t seed, const std::string& out_dir,
                                const std::string& config_hash) {
  for (const TaskSpec& task : group.tasks) {
    teachers.for_task(task.task_id);  // fail fast on missing checkpoints
  }
  const TaskClouds clouds =
      presample_clouds(group, config.presample_points, seed);

  VecEnv venv(group, scene, weights, seed, config.num_envs);
  const std::size_t N = venv.size();
  const std::size_t pw = student_proprio_width();

  RngStream init_rng(seed, 0x21ull);
  StudentActor students[2] = {
      StudentActor(static_cast<int>(pw), static_cast<int>(config.K), config.P,
                   config.encoder, config.hidden, init_rng),
      StudentActor(static_cast<int>(pw), static_cast<int>(config.K), config.P,
                   config.encoder, config.hidden, init_rng)};
  nn::AdamWConfig oc;
  oc.learning_rate = config.learning_rate;
  oc.weight_decay = config.weight_decay;
  nn::AdamW optimizers[2] = {nn::AdamW(students[0].params(), oc),
                             nn::AdamW(students[1].params(), oc)};
  SampleBuffer buffers[2] = {SampleBuffer(config.buffer_capacity),
                             SampleBuffer(config.buffer_capacity)};
  RngStream trainer_rng(seed, 0x22ull);

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir + "/distill_log.jsonl", std::ios::trunc);
  }

  // Scratch for one rollout step.
  std::vector<StudentObs> step_obs[2];
  step_obs[0].resize(N);
  step_obs[1].resize(N);
  nn::Matrix proprio_future[2];
  nn::Matrix points[2];
  for (int side = 0; side < 2; ++side) {
    proprio_future[side].resize(static_cast<Eigen::Index>(N),
                                static_cast<Eigen::Index>(pw + 3 * config.K));
    points[side].resize(static_cast<Eigen::Index>(N * config.P), 3);
  }
  std::vector<std::size_t> env_task(N);
  for (std::size_t e = 0; e < N; ++e) {
    env_task[e] = task_index_in_group(group, venv.env(e).task().task_id);
  }

  /// Collects one environment step; when learn is false the samples only go
  /// to the holdout accumulator.
  auto collect_step = [&](bool learn, std::vector<DaggerSample>* holdout,
                          std::size_t* expert_count, std::size_t* action_count) {
    parallel_for(N, [&](std::size_t e) {
      const EnvState& s = venv.env(e).state();
      step_obs[0][e] = assemble_student_obs(
          s, Side::Left, clouds.object_cloud[env_task[e]], config.P, config.K,
          config.noise_std, venv.rng(e));
      step_obs[1][e] = assemble_student_obs(
          s, Side::Right, clouds.tool_cloud[env_task[e]], config.P, config.K,
          config.noise_std, venv.rng(e));
    });
    for (int side = 0; side < 2; ++side) {
      for (std::size_t e = 0; e < N; ++e) {
        pack_student_row(step_obs[side][e], static_cast<Eigen::Index>(e),
                         proprio_future[side], points[side], config.P);
      }
    }
    nn::Matrix student_mean[2];
    for (int side = 0; side < 2; ++side) {
      student_mean[side] =
          students[side].act_mean(proprio_future[side], points[side]);
    }

    // Expert labels for every visited state.
    std::vector<Action> labels[2];
    labels[0].resize(N);
    labels[1].resize(N);
    for (std::size_t e = 0; e < N; ++e) {
      const auto& pair = teachers.for_task(group.tasks[env_task[e]].task_id);
      const EnvState& s = venv.env(e).state();
      labels[0][e] = label_with_expert(pair.first, s, Side::Left);
      labels[1][e] = label_with_expert(pair.second, s, Side::Right);
    }

    nn::Matrix exec_left(static_cast<Eigen::Index>(N),
                         static_cast<Eigen::Index>(kActionDim));
    nn::Matrix exec_right(static_cast<Eigen::Index>(N),
                          static_cast<Eigen::Index>(kActionDim));
    for (std::size_t e = 0; e < N; ++e) {
      for (int side = 0; side < 2; ++side) {
        const bool use_expert =
            venv.rng(e).next_double() < config.expert_mix_p;
        if (expert_count && use_expert) *expert_count += 1;
        if (action_count) *action_count += 1;
        Action executed;
        if (use_expert) {
          executed = clamp_action_unit(labels[side][e]);
        } else {
          Action mean_a;
          for (std::size_t j = 0; j < kActionDim; ++j) {
            mean_a[j] = student_mean[side](static_cast<Eigen::Index>(e),
                                           static_cast<Eigen::Index>(j));
          }
          executed = clamp_action_unit(mean_a);
        }
        nn::Matrix& out = side == 0 ? exec_left : exec_right;
        for (std::size_t j = 0; j < kActionDim; ++j) {
          out(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) =
              executed[j];
        }
      }
      for (int side = 0; side < 2; ++side) {
        DaggerSample sample;
        sample.proprio = step_obs[side][e].proprio;
        sample.points = step_obs[side][e].points;
        sample.future = step_obs[side][e].future_positions;
        sample.label = labels[side][e];
        if (learn) {
          buffers[side].push(std::move(sample));
        } else if (holdout) {
          holdout[side].push_back(std::move(sample));
        }
      }
    }
    venv.step(exec_left, exec_right, nullptr, nullptr, nullptr, nullptr);
  };

  StudentTrainResult result;
  for (std::size_t iteration = 0; iteration < config.total_iterations;
       ++iteration) {
    std::size_t expert_count = 0;
    std::size_t action_count = 0;
    for (std::size_t s = 0; s < config.rollout_steps; ++s) {
      collect_step(true, nullptr, &expert_count, &action_count);
    }

    StudentIterationLog log;
    log.iteration = iteration + 1;
    log.executed_expert_fraction =
        action_count == 0
            ? 0.0
            : static_cast<double>(expert_count) / static_cast<double>(action_count);

    double mse_sum[2] = {0.0, 0.0};
    std::size_t n_updates = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t mb = 0; mb < config.minibatches; ++mb) {
        for (int side = 0; side < 2; ++side) {
          const std::size_t avail = buffers[side].size();
          const std::size_t m = std::min(config.minibatch_size, avail);
          if (m == 0) continue;
          std::vector<std::size_t> idx(m);
          for (std::size_t k = 0; k < m; ++k) {
            idx[k] = static_cast<std::size_t>(trainer_rng.next_below(avail));
          }
          MinibatchViews views;
          fill_minibatch(buffers[side], idx, config.P, pw, config.K, views);
          mse_sum[side] += student_update(students[side], optimizers[side],
                                          views, config.max_grad_norm);
        }
        n_updates += 1;
      }
    }
    if (n_updates > 0) {
      log.mse_left = mse_sum[0] / static_cast<double>(n_updates);
      log.mse_right = mse_sum[1] / static_cast<double>(n_updates);
    }
    result.iterations_run = iteration + 1;

    bool stop = false;
    const bool eval_now =
        config.eval_every > 0 && ((iteration + 1) % config.eval_every == 0 ||
                                  iteration + 1 == config.total_iterations);
    if (eval_now) {
      const auto [r1, r2] =
          evaluate_student(group, students[0], students[1], config, scene,
                           weights, config.eval_episodes, seed);
      log.evaluated = true;
      log.r1 = r1;
      log.r2 = r2;
      result.final_r1 = r1;
      result.final_r2 = r2;
      if (config.stop_r2 > 0.0 && r2 >= config.stop_r2) stop = true;
    }
    result.logs.push_back(log);
    if (log_file.is_open()) {
      json jl{{"iteration", log.iteration},
              {"mse_left", log.mse_left},
              {"mse_right", log.mse_right},
              {"executed_expert_fraction", log.executed_expert_fraction}};
      if (log.evaluated) {
        jl["r1"] = log.r1;
        jl["r2"] = log.r2;
      }
      log_file << jl.dump() << "\n";
      log_file.flush();
    }
    if (stop) break;
  }

  // Held-out regression quality on fresh student-driven states.
  std::vector<DaggerSample> holdout[2];
  for (std::size_t s = 0; s < 2 * config.rollout_steps; ++s) {
    collect_step(false, holdout, nullptr, nullptr);
  }
  double holdout_mse = 0.0;
  std::size_t holdout_n = 0;
  for (int side = 0; side < 2; ++side) {
    if (holdout[side].empty()) continue;
    SampleBuffer tmp(holdout[side].size());
    std::vector<std::size_t> idx(holdout[side].size());
    for (std::size_t i = 0; i < holdout[side].size(); ++i) {
      tmp.push(holdout[side][i]);
      idx[i] = i;
    }
    MinibatchViews views;
    fill_minibatch(tmp, idx, config.P, pw, config.K, views);
    const nn::Matrix mean =
        students[side].act_mean(views.proprio_future, views.points);
    holdout_mse += (mean - views.labels).squaredNorm();
    holdout_n += static_cast<std::size_t>(views.labels.size());
  }
  result.holdout_mse =
      holdout_n == 0 ? 0.0 : holdout_mse / static_cast<double>(holdout_n);

  if (!out_dir.empty()) {
    CheckpointMeta meta{{"config_hash", config_hash},
                        {"group_id", group.group_id},
                        {"seed", std::to_string(seed)},
                        {"K", std::to_string(config.K)},
                        {"P", std::to_string(config.P)}};
    save_student(students[0], out_dir + "/student_left.ckpt",
                 result.iterations_run, meta);
    save_student(students[1], out_dir + "/student_right.ckpt",
                 result.iterations_run, meta);
  }

  result.left = std::move(students[0]);
  result.right = std::move(students[1]);
  return result;
}

std::pair<double, double> evaluate_student(
    const TaskGroup& group, const StudentActor& left, const StudentActor& right,
    const DaggerConfig& config, const SceneConfig& scene,
    const RewardWeights& weights, std::size_t episodes_per_task,
    std::uint64_t seed, std::vector<EpisodeLog>* logs_out) {
  const TaskClouds clouds =
      presample_clouds(group, config.presample_points, seed);
  const std::size_t total = group.tasks.size() * episodes_per_task;
  std::vector<EpisodeLog> logs(total);
  const std::size_t pw = student_proprio_width();

  parallel_for(total, [&](std::size_t k) {
    const std::size_t task_idx = k / episodes_per_task;
    BimanualEnv env(group.tasks[task_idx], scene, weights, group.width());
    RngStream rng(seed, 0xF000ull + k);
    PolicyFn policy = [&](const EnvState& state, RngStream& episode_rng) {
      std::array<Action, kNumSides> out;
      const StudentActor* nets[2] = {&left, &right};
      const std::vector<Vec3>* cloud[2] = {&clouds.object_cloud[task_idx],
                                           &clouds.tool_cloud[task_idx]};
      for (int side = 0; side < 2; ++side) {
        const StudentObs obs = assemble_student_obs(
            state, static_cast<Side>(side), *cloud[side], config.P, config.K,
            config.noise_std, episode_rng);
        nn::Matrix pf(1, static_cast<Eigen::Index>(pw + 3 * config.K));
        nn::Matrix pts(static_cast<Eigen::Index>(config.P), 3);
        pack_student_row(obs, 0, pf, pts, config.P);
        const nn::Matrix mean = nets[side]->act_mean(pf, pts);
        for (std::size_t j = 0; j < kActionDim; ++j) {
          out[side][j] = mean(0, static_cast<Eigen::Index>(j));
        }
      }
      return out;
    };
    logs[k] = run_episode(env, policy, rng);
  });

  const double r1 = eval_r1(logs, weights.eps_succ, scene.u_consecutive);
  const double r2 = eval_r2(logs, weights.eps_succ, weights.f);
  if (logs_out) *logs_out = std::move(logs);
  return {r1, r2};
}

BcDataset bc_build_dataset(const TaskGroup& group, const SceneConfig& scene,
                           const RewardWeights& weights) {
  BcDataset dataset;
  for (const TaskSpec& task : group.tasks) {
    BimanualEnv env(task, scene, weights, group.width());
    env.reset();
    // Observations come from replaying the demonstration in its own frame.
    env.scripted_place_objects(task.demo_steps[0].tool_pose,
                               task.demo_steps[0].object_pose);
    const std::size_t l = task.demo_steps.size();
    for (std::size_t t = 0; t + 1 < l; ++t) {
      const DemoStep& next = task.demo_steps[t + 1];
      const double target_closure = t + 1 >= task.reference_index ? 1.0 : 0.0;
      const Pose targets[2] = {next.left_wrist, next.right_wrist};
      for (int side = 0; side < 2; ++side) {
        const EnvState& s = env.state();
        const HandState& hand = s.hand(static_cast<Side>(side));
        Action a{};
        const Vec3 dpos = targets[side].position - hand.wrist_pose.position;
        a[0] = std::clamp(dpos.x / scene.max_step_translation, -1.0, 1.0);
        a[1] = std::clamp(dpos.y / scene.max_step_translation, -1.0, 1.0);
        a[2] = std::clamp(dpos.z / scene.max_step_translation, -1.0, 1.0);
        const Vec3 rv =
            quat_mul(targets[side].orientation,
                     hand.wrist_pose.orientation.conjugate())
                .to_rotvec();
        a[3] = std::clamp(rv.x / scene.max_step_rotation, -1.0, 1.0);
        a[4] = std::clamp(rv.y / scene.max_step_rotation, -1.0, 1.0);
        a[5] = std::clamp(rv.z / scene.max_step_rotation, -1.0, 1.0);
        for (std::size_t f = 0; f < kFingersPerHand; ++f) {
          a[6 + f] = std::clamp(
              (target_closure - hand.closure[f]) / scene.max_step_closure, -1.0,
              1.0);
        }
        dataset[side].push_back(
            {assemble_teacher_obs(s, static_cast<Side>(side)), a});
      }
      env.scripted_place_hand(Side::Left, next.left_wrist, target_closure);
      env.scripted_place_hand(Side::Right, next.right_wrist, target_closure);
    }
  }
  return dataset;
}

std::pair<ActorCritic, ActorCritic> bc_train(const BcDataset& dataset,
                                             const BcConfig& config,
                                             std::uint64_t seed,
                                             std::vector<double>* loss_history) {
  if (dataset[0].empty() || dataset[1].empty()) {
    throw std::invalid_argument("bc_train: empty dataset");
  }
  const int obs_w = static_cast<int>(dataset[0][0].first.size());
  RngStream init_rng(seed, 0x31ull);
  std::pair<ActorCritic, ActorCritic> policies{
      ActorCritic(obs_w, static_cast<int>(kActionDim), config.hidden,
                  config.log_std_init, init_rng),
      ActorCritic(obs_w, static_cast<int>(kActionDim), config.hidden,
                  config.log_std_init, init_rng)};
  RngStream shuffle_rng(seed, 0x32ull);

  for (int side = 0; side < 2; ++side) {
    ActorCritic& policy = side == 0 ? policies.first : policies.second;
    nn::AdamWConfig oc;
    oc.learning_rate = config.learning_rate;
    oc.weight_decay = config.weight_decay;
    nn::AdamW optimizer(policy.actor.params(), oc);
    const auto& data = dataset[side];
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      shuffled_indices(n, shuffle_rng, order.data());
      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t lo = 0; lo < n; lo += config.minibatch_size) {
        const std::size_t hi = std::min(n, lo + config.minibatch_size);
        const Eigen::Index m = static_cast<Eigen::Index>(hi - lo);
        nn::Matrix obs(m, obs_w);
        nn::Matrix labels(m, static_cast<Eigen::Index>(kActionDim));
        for (Eigen::Index r = 0; r < m; ++r) {
          const auto& [o, a] = data[order[lo + static_cast<std::size_t>(r)]];
          for (int c = 0; c < obs_w; ++c) obs(r, c) = o[static_cast<std::size_t>(c)];
          for (std::size_t j = 0; j < kActionDim; ++j) {
            labels(r, static_cast<Eigen::Index>(j)) = a[j];
          }
        }
        nn::Mlp::Cache cache;
        const nn::Matrix mean = policy.actor.forward(obs, &cache);
        const nn::Matrix err = mean - labels;
        const double denom = static_cast<double>(err.size());
        epoch_loss += err.squaredNorm() / denom;
        nn::GradList grads;
        policy.actor.backward(cache, (2.0 / denom) * err, grads);
        nn::clip_grad_norm(grads, config.max_grad_norm);
        optimizer.step(grads);
        batches += 1;
      }
      if (loss_history && side == 0 && batches > 0) {
        loss_history->push_back(epoch_loss / static_cast<double>(batches));
      }
    }
  }
  return policies;
}

}  // namespace bidex
