#include "bidex/reward.hpp"

#include <algorithm>
#include <cmath>

#include "bidex/env.hpp"

namespace bidex {

double approach_reward(const Vec3& wrist,
                       const std::array<Vec3, kFingersPerHand>& fingertips,
                       const Vec3& gc, double w_r) {
  double ft_sum = 0.0;
  for (const Vec3& f : fingertips) ft_sum += distance(f, gc);
  return -distance(wrist, gc) - w_r * ft_sum;
}

namespace {

bool proximity_gate(const Vec3& wrist,
                    const std::array<Vec3, kFingersPerHand>& fingertips,
                    const Vec3& gc, double lambda_w, double lambda_ft) {
  if (distance(wrist, gc) > lambda_w) return false;
  double ft_sum = 0.0;
  for (const Vec3& f : fingertips) ft_sum += distance(f, gc);
  return ft_sum <= lambda_ft;
}

}  // namespace

double lift_reward(const Vec3& wrist,
                   const std::array<Vec3, kFingersPerHand>& fingertips,
                   const Vec3& gc, const Vec3& obj_pos,
                   const UnitQuat& obj_quat, const Vec3& ref_pos,
                   const UnitQuat& ref_quat, const Vec3& init_pos,
                   const RewardWeights& w) {
  if (!proximity_gate(wrist, fingertips, gc, w.lambda_w, w.lambda_ft)) {
    return 0.0;
  }
  const double span = distance(init_pos, ref_pos);
  double r_pos;
  if (span <= 1e-9) {
    // Degenerate task: initial and reference positions coincide.
    r_pos = distance(obj_pos, ref_pos) <= w.eps_succ ? 1.0 : 0.0;
  } else {
    r_pos = std::max(1.0 - distance(obj_pos, ref_pos) / span, 0.0);
  }
  const double r_quat = -quat_dist(obj_quat, ref_quat);
  return r_pos + w.w_q * r_quat;
}

double bonus_reward(const Vec3& obj_pos, const Vec3& ref_pos, double eps_succ) {
  const double d = distance(obj_pos, ref_pos);
  if (d > eps_succ) return 0.0;
  return 1.0 / (1.0 + d);
}

std::size_t tracking_index(std::size_t t_since_tracking, std::size_t f,
                           std::size_t track_length) {
  const std::size_t i =
      (t_since_tracking + f - 1) / f;  // ceil(t / f), exact in integers
  return std::min(i, track_length == 0 ? std::size_t{0} : track_length - 1);
}

double track_reward(const Vec3& obj_pos_sim, const std::vector<Pose>& demo_track,
                    std::size_t t_since_tracking, std::size_t f, double w_t,
                    Stage stage) {
  if (stage != Stage::Tracking || demo_track.empty()) return 0.0;
  const std::size_t i = tracking_index(t_since_tracking, f, demo_track.size());
  return std::exp(-w_t * distance(obj_pos_sim, demo_track[i].position));
}

RewardBreakdown total_reward(const EnvState& state, Side side,
                             const RewardWeights& w) {
  const TaskSpec& task = *state.task;
  const HandState& hand = state.hand(side);
  const ObjectState& obj = state.paired_object(side);
  const bool is_left = side == Side::Left;

  Vec3 gc = is_left ? task.grasp_center_object : task.grasp_center_tool;
  if (w.use_geometric_center) {
    const auto& pts = is_left ? task.object_points : task.tool_points;
    const Pose& ref =
        is_left ? task.object_reference_pose : task.tool_reference_pose;
    gc = transform_point(ref, centroid(pts));
  }
  const Pose& ref_pose =
      is_left ? task.object_reference_pose : task.tool_reference_pose;
  const Pose& init_pose =
      is_left ? task.initial_object_pose : task.initial_tool_pose;
  const auto& track = is_left ? task.object_track : task.tool_track;

  const auto fingertips = hand.fingertips();
  RewardBreakdown r;
  if (!w.disable_stage1) {
    r.appro = approach_reward(hand.wrist_pose.position, fingertips, gc, w.w_r);
    r.lift = lift_reward(hand.wrist_pose.position, fingertips, gc,
                         obj.pose.position, obj.pose.orientation,
                         ref_pose.position, ref_pose.orientation,
                         init_pose.position, w);
    if (!w.disable_bonus) {
      r.bonus = bonus_reward(obj.pose.position, ref_pose.position, w.eps_succ);
    }
  }
  r.track = track_reward(obj.pose.position, track, state.t_since_tracking, w.f,
                         w.w_t, state.stage);
  r.align = w.w1 * r.appro + w.w2 * r.lift + w.w3 * r.bonus;
  r.total = r.align + w.w4 * r.track;
  return r;
}

}  // namespace bidex
