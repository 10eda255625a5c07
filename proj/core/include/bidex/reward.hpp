#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "bidex/geometry.hpp"
#include "bidex/scene.hpp"

namespace bidex {

struct EnvState;

/// Weights and thresholds of the two-stage reward, with the ablation toggles.
struct RewardWeights {
  double w_r = 2.0;   // fingertip weight inside the approach term
  double w_t = 15.0;  // tracking exponential sharpness
  double w1 = 0.5;    // approach weight
  double w2 = 1.0;    // lift weight
  double w3 = 1.0;    // bonus weight
  double w4 = 1.0;    // tracking weight
  double w_q = 0.5;   // orientation penalty inside the lift term
  double lambda_w = 0.12;   // m, wrist-to-grasp-center gate
  double lambda_ft = 0.48;  // m, summed fingertip gate
  double eps_succ = 0.1;    // m, alignment success radius
  std::size_t f = 5;        // simulation steps per demo step

  bool disable_stage1 = false;
  bool use_geometric_center = false;
  bool disable_bonus = false;
};

/// Per-step reward decomposition for one side.
/// Invariants: align = w1*appro + w2*lift + w3*bonus; total = align + w4*track.
struct RewardBreakdown {
  double appro = 0.0;
  double lift = 0.0;
  double bonus = 0.0;
  double align = 0.0;
  double track = 0.0;
  double total = 0.0;
};

/// -|wrist - gc| - w_r * sum_i |fingertip_i - gc|; always <= 0.
double approach_reward(const Vec3& wrist,
                       const std::array<Vec3, kFingersPerHand>& fingertips,
                       const Vec3& gc, double w_r);

/// Position-progress plus orientation penalty, gated on wrist and fingertip
/// proximity to the grasp center; 0 when the gate fails. When the initial and
/// reference positions coincide the position term degenerates to an
/// eps_succ-ball indicator.
double lift_reward(const Vec3& wrist,
                   const std::array<Vec3, kFingersPerHand>& fingertips,
                   const Vec3& gc, const Vec3& obj_pos,
                   const UnitQuat& obj_quat, const Vec3& ref_pos,
                   const UnitQuat& ref_quat, const Vec3& init_pos,
                   const RewardWeights& w);

/// 1 / (1 + d) inside the eps_succ ball, 0 outside.
double bonus_reward(const Vec3& obj_pos, const Vec3& ref_pos, double eps_succ);

enum class Stage { Aligning = 0, Tracking = 1 };

/// exp(-w_t * |x - x_hat_i|) with i = ceil(t_since_tracking / f) clamped to
/// the final demo index; 0 while aligning.
double track_reward(const Vec3& obj_pos_sim, const std::vector<Pose>& demo_track,
                    std::size_t t_since_tracking, std::size_t f, double w_t,
                    Stage stage);

std::size_t tracking_index(std::size_t t_since_tracking, std::size_t f,
                           std::size_t track_length);

/// Full per-side composition with the left-object / right-tool pairing and
/// the ablation toggles applied.
RewardBreakdown total_reward(const EnvState& state, Side side,
                             const RewardWeights& w);

}  // namespace bidex
