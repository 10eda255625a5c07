#include "bidex/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bidex {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

Action clamp_action(const Action& a) {
  Action out;
  for (std::size_t i = 0; i < kActionDim; ++i) out[i] = clamp_unit(a[i]);
  return out;
}

}  // namespace

double HandState::mean_closure() const {
  double s = 0.0;
  for (double c : closure) s += c;
  return s / static_cast<double>(kFingersPerHand);
}

Vec3 HandState::fingertip(std::size_t finger) const {
  return fingertip_position(wrist_pose, finger, closure[finger]);
}

std::array<Vec3, kFingersPerHand> HandState::fingertips() const {
  std::array<Vec3, kFingersPerHand> out;
  for (std::size_t f = 0; f < kFingersPerHand; ++f) out[f] = fingertip(f);
  return out;
}

std::size_t EnvState::group_size() const { return group_count; }

bool attach_check(const HandState& hand, const ObjectState& obj,
                  const Vec3& grasp_center_world, const RewardWeights& w,
                  double c_grasp) {
  (void)obj;
  if (hand.mean_closure() < c_grasp) return false;
  if (distance(hand.wrist_pose.position, grasp_center_world) > w.lambda_w) {
    return false;
  }
  double ft_sum = 0.0;
  for (std::size_t f = 0; f < kFingersPerHand; ++f) {
    ft_sum += distance(hand.fingertip(f), grasp_center_world);
  }
  return ft_sum <= w.lambda_ft;
}

BimanualEnv::BimanualEnv(const TaskSpec& task, const SceneConfig& scene,
                         const RewardWeights& weights, std::size_t group_size)
    : task_(&task), scene_(scene), weights_(weights), group_size_(group_size) {
  if (group_size_ == 0 || task.one_hot_id >= group_size_) {
    throw std::invalid_argument("BimanualEnv: one-hot id outside group");
  }
  state_.task = task_;
  state_.group_count = group_size_;
  reset();
}

StepResult BimanualEnv::reset() {
  EnvState s;
  s.task = task_;
  s.group_count = group_size_;
  for (int i = 0; i < kNumSides; ++i) {
    s.hands[i] = HandState{};
    s.hands[i].wrist_pose = scene_.hand_home_pose(static_cast<Side>(i));
  }
  s.tool = ObjectState{};
  s.tool.pose = task_->initial_tool_pose;
  s.object = ObjectState{};
  s.object.pose = task_->initial_object_pose;
  state_ = s;

  StepResult r;
  r.obs_left = assemble_teacher_obs(state_, Side::Left);
  r.obs_right = assemble_teacher_obs(state_, Side::Right);
  r.flags.stage = state_.stage;
  return r;
}

void BimanualEnv::update_attachments() {
  struct Pairing {
    Side side;
    ObjectState* obj;
    const Vec3* grasp_local;
  };
  Pairing pairings[2] = {
      {Side::Left, &state_.object, &task_->object_grasp_local},
      {Side::Right, &state_.tool, &task_->tool_grasp_local},
  };
  for (const Pairing& p : pairings) {
    HandState& hand = state_.hand(p.side);
    const Attachment held =
        p.side == Side::Left ? Attachment::Left : Attachment::Right;
    if (p.obj->attachment == held) {
      if (hand.mean_closure() < scene_.c_release) {
        p.obj->attachment = Attachment::None;
        p.obj->attach_offset = Pose{};
      }
    } else if (p.obj->attachment == Attachment::None) {
      // Grasp feature tracked in the object's current frame.
      const Vec3 gc_now = transform_point(p.obj->pose, *p.grasp_local);
      if (attach_check(hand, *p.obj, gc_now, weights_, scene_.c_grasp)) {
        p.obj->attachment = held;
        p.obj->attach_offset = hand.wrist_pose.inverse().compose(p.obj->pose);
      }
    }
  }
}

void BimanualEnv::settle_unattached(ObjectState& obj,
                                    const std::vector<Vec3>& points) {
  // Rest height depends on the current orientation: drop until the lowest
  // surface point touches the table.
  double min_local_z = 0.0;
  bool first = true;
  for (const Vec3& p : points) {
    const double z = obj.pose.orientation.rotate(p).z;
    if (first || z < min_local_z) {
      min_local_z = z;
      first = false;
    }
  }
  const double rest_z = scene_.table_height - min_local_z;
  if (obj.pose.position.z > rest_z) {
    const double drop = scene_.fall_speed * scene_.control_dt;
    obj.pose.position.z = std::max(rest_z, obj.pose.position.z - drop);
  }
}

void BimanualEnv::update_stage() {
  if (state_.stage == Stage::Tracking) {
    state_.t_since_tracking += 1;
    state_.current_track_index = tracking_index(
        state_.t_since_tracking, weights_.f, task_->track_length());
    return;
  }
  const bool tool_ok =
      distance(state_.tool.pose.position,
               task_->tool_reference_pose.position) <= weights_.eps_succ;
  const bool object_ok =
      distance(state_.object.pose.position,
               task_->object_reference_pose.position) <= weights_.eps_succ;
  if (tool_ok && object_ok) {
    state_.consec_success += 1;
  } else {
    state_.consec_success = 0;
  }
  if (state_.consec_success >= scene_.u_consecutive) {
    state_.stage = Stage::Tracking;
    state_.t_since_tracking = 0;
    state_.current_track_index = 0;
    state_.tracking_start_t = static_cast<std::int64_t>(state_.t) - 1;
  }
}

StepResult BimanualEnv::step(const Action& left, const Action& right) {
  if (state_.done) {
    throw std::logic_error("BimanualEnv::step called on a finished episode");
  }
  const Action acts[2] = {clamp_action(left), clamp_action(right)};
  const double dt = scene_.control_dt;

  for (int i = 0; i < kNumSides; ++i) {
    HandState& hand = state_.hands[i];
    const Pose before = hand.wrist_pose;
    const std::array<double, kFingersPerHand> closure_before = hand.closure;

    const Action& a = acts[i];
    hand.wrist_pose.position += Vec3{a[0], a[1], a[2]} * scene_.max_step_translation;
    const Vec3 rotvec = Vec3{a[3], a[4], a[5]} * scene_.max_step_rotation;
    hand.wrist_pose.orientation =
        quat_mul(UnitQuat::from_rotvec(rotvec), hand.wrist_pose.orientation);
    for (std::size_t f = 0; f < kFingersPerHand; ++f) {
      hand.closure[f] = std::clamp(
          hand.closure[f] + a[6 + f] * scene_.max_step_closure, 0.0, 1.0);
      hand.closure_velocity[f] = (hand.closure[f] - closure_before[f]) / dt;
    }
    hand.wrist_linear_velocity =
        (hand.wrist_pose.position - before.position) * (1.0 / dt);
    hand.wrist_angular_velocity =
        quat_mul(hand.wrist_pose.orientation, before.orientation.conjugate())
            .to_rotvec() *
        (1.0 / dt);
  }

  update_attachments();

  ObjectState* objs[2] = {&state_.tool, &state_.object};
  const std::vector<Vec3>* pts[2] = {&task_->tool_points, &task_->object_points};
  for (int i = 0; i < 2; ++i) {
    ObjectState& obj = *objs[i];
    const Pose before = obj.pose;
    if (obj.attachment != Attachment::None) {
      const Side holder =
          obj.attachment == Attachment::Left ? Side::Left : Side::Right;
      obj.pose = state_.hand(holder).wrist_pose.compose(obj.attach_offset);
    } else {
      settle_unattached(obj, *pts[i]);
    }
    obj.linear_velocity = (obj.pose.position - before.position) * (1.0 / dt);
    obj.angular_velocity =
        quat_mul(obj.pose.orientation, before.orientation.conjugate())
            .to_rotvec() *
        (1.0 / dt);
  }

  state_.t += 1;
  update_stage();

  StepResult r;
  r.reward_left = total_reward(state_, Side::Left, weights_);
  r.reward_right = total_reward(state_, Side::Right, weights_);

  state_.prev_action[0] = acts[0];
  state_.prev_action[1] = acts[1];
  state_.done = state_.t >= scene_.episode_length;

  r.obs_left = assemble_teacher_obs(state_, Side::Left);
  r.obs_right = assemble_teacher_obs(state_, Side::Right);
  r.flags.stage = state_.stage;
  r.flags.consec_success = state_.consec_success;
  r.flags.entered_tracking =
      state_.stage == Stage::Tracking && state_.t_since_tracking == 0;
  r.flags.done = state_.done;
  return r;
}

void BimanualEnv::scripted_place_hand(Side side, const Pose& wrist,
                                      double closure) {
  const double dt = scene_.control_dt;
  HandState& hand = state_.hand(side);
  const Pose before = hand.wrist_pose;
  hand.wrist_pose = wrist;
  hand.wrist_linear_velocity =
      (hand.wrist_pose.position - before.position) * (1.0 / dt);
  hand.wrist_angular_velocity =
      quat_mul(hand.wrist_pose.orientation, before.orientation.conjugate())
          .to_rotvec() *
      (1.0 / dt);
  for (std::size_t f = 0; f < kFingersPerHand; ++f) {
    hand.closure_velocity[f] = (closure - hand.closure[f]) / dt;
    hand.closure[f] = closure;
  }
  update_attachments();
  ObjectState* objs[2] = {&state_.tool, &state_.object};
  const std::vector<Vec3>* pts[2] = {&task_->tool_points, &task_->object_points};
  for (int i = 0; i < 2; ++i) {
    ObjectState& obj = *objs[i];
    const Pose before_obj = obj.pose;
    if (obj.attachment != Attachment::None) {
      const Side holder =
          obj.attachment == Attachment::Left ? Side::Left : Side::Right;
      obj.pose = state_.hand(holder).wrist_pose.compose(obj.attach_offset);
    } else {
      settle_unattached(obj, *pts[i]);
    }
    obj.linear_velocity = (obj.pose.position - before_obj.position) * (1.0 / dt);
    obj.angular_velocity =
        quat_mul(obj.pose.orientation, before_obj.orientation.conjugate())
            .to_rotvec() *
        (1.0 / dt);
  }
}

void BimanualEnv::scripted_place_objects(const Pose& tool, const Pose& object) {
  state_.tool.pose = tool;
  state_.tool.linear_velocity = Vec3{};
  state_.tool.angular_velocity = Vec3{};
  state_.object.pose = object;
  state_.object.linear_velocity = Vec3{};
  state_.object.angular_velocity = Vec3{};
}

std::size_t BimanualEnv::teacher_obs_width() const {
  return bidex::teacher_obs_width(group_size_);
}

std::size_t teacher_obs_width(std::size_t group_size) {
  return 7 + 6 + 4 + 4 + 12 + 7 + 3 + 3 + group_size + kActionDim;
}

std::size_t student_proprio_width() { return 7 + 6 + 4 + 4 + 12 + kActionDim; }

namespace {

double* write_pose(double* out, const Pose& p) {
  *out++ = p.position.x;
  *out++ = p.position.y;
  *out++ = p.position.z;
  *out++ = p.orientation.w;
  *out++ = p.orientation.x;
  *out++ = p.orientation.y;
  *out++ = p.orientation.z;
  return out;
}

double* write_vec3(double* out, const Vec3& v) {
  *out++ = v.x;
  *out++ = v.y;
  *out++ = v.z;
  return out;
}

double* write_proprio(double* out, const EnvState& state, Side side) {
  const HandState& hand = state.hand(side);
  out = write_pose(out, hand.wrist_pose);
  out = write_vec3(out, hand.wrist_linear_velocity);
  out = write_vec3(out, hand.wrist_angular_velocity);
  for (double c : hand.closure) *out++ = c;
  for (double cv : hand.closure_velocity) *out++ = cv;
  for (std::size_t f = 0; f < kFingersPerHand; ++f) {
    out = write_vec3(out, hand.fingertip(f));
  }
  return out;
}

}  // namespace

std::vector<double> assemble_teacher_obs(const EnvState& state, Side side) {
  std::vector<double> obs(teacher_obs_width(state.group_size()));
  double* out = obs.data();
  out = write_proprio(out, state, side);
  const ObjectState& obj = state.paired_object(side);
  out = write_pose(out, obj.pose);
  out = write_vec3(out, obj.linear_velocity);
  out = write_vec3(out, obj.angular_velocity);
  for (std::size_t i = 0; i < state.group_size(); ++i) {
    *out++ = i == state.task->one_hot_id ? 1.0 : 0.0;
  }
  const Action& prev = state.prev_action[static_cast<int>(side)];
  for (double a : prev) *out++ = a;
  return obs;
}

StudentObs assemble_student_obs(const EnvState& state, Side side,
                                const std::vector<Vec3>& presampled_canonical,
                                std::size_t P, std::size_t K, double noise_std,
                                RngStream& rng) {
  if (P > presampled_canonical.size()) {
    throw std::invalid_argument(
        "assemble_student_obs: P exceeds the pre-sampled cloud");
  }
  StudentObs obs;
  obs.proprio.resize(student_proprio_width());
  double* out = obs.proprio.data();
  out = write_proprio(out, state, side);
  const Action& prev = state.prev_action[static_cast<int>(side)];
  for (double a : prev) *out++ = a;

  // Partial Fisher-Yates draw without replacement.
  std::vector<std::size_t> idx(presampled_canonical.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  obs.points.reserve(P);
  const Pose& pose = state.paired_object(side).pose;
  for (std::size_t k = 0; k < P; ++k) {
    const std::size_t j =
        k + static_cast<std::size_t>(rng.next_below(idx.size() - k));
    std::swap(idx[k], idx[j]);
    Vec3 p = transform_point(pose, presampled_canonical[idx[k]]);
    if (noise_std > 0.0) {
      p.x += noise_std * rng.next_gaussian();
      p.y += noise_std * rng.next_gaussian();
      p.z += noise_std * rng.next_gaussian();
    }
    obs.points.push_back(p);
  }

  const TaskSpec& task = *state.task;
  const auto& track = side == Side::Left ? task.object_track : task.tool_track;
  const std::size_t L = track.size();
  obs.future_positions.reserve(K);
  for (std::size_t k = 1; k <= K; ++k) {
    std::size_t i;
    if (state.stage == Stage::Tracking) {
      i = std::min(state.current_track_index + k, L - 1);
    } else {
      i = std::min(k - 1, L - 1);
    }
    obs.future_positions.push_back(track[i].position);
  }
  return obs;
}

EpisodeLog run_episode(BimanualEnv& env, const PolicyFn& policy,
                       RngStream& rng) {
  env.reset();
  const TaskSpec& task = env.task();

  EpisodeLog log;
  log.task_id = task.task_id;
  log.tool_reference_position = task.tool_reference_pose.position;
  log.object_reference_position = task.object_reference_pose.position;
  log.tool_track_positions.reserve(task.tool_track.size());
  for (const Pose& p : task.tool_track) log.tool_track_positions.push_back(p.position);
  log.object_track_positions.reserve(task.object_track.size());
  for (const Pose& p : task.object_track) {
    log.object_track_positions.push_back(p.position);
  }

  while (!env.state().done) {
    const auto actions = policy(env.state(), rng);
    const StepResult r = env.step(actions[0], actions[1]);
    const EnvState& s = env.state();
    EpisodeStepRecord rec;
    rec.t = s.t - 1;
    rec.stage = s.stage;
    rec.tool_pose = s.tool.pose;
    rec.object_pose = s.object.pose;
    rec.left_wrist = s.hand(Side::Left).wrist_pose;
    rec.right_wrist = s.hand(Side::Right).wrist_pose;
    rec.reward_left = r.reward_left;
    rec.reward_right = r.reward_right;
    rec.tool_attached = s.tool.attachment != Attachment::None;
    rec.object_attached = s.object.attachment != Attachment::None;
    log.steps.push_back(rec);
  }
  return log;
}

}  // namespace bidex
