#pragma once

#include <cstddef>

#include "bidex/geometry.hpp"

namespace bidex {

/// Side of the bimanual rig. The left hand pairs with the target object, the
/// right hand with the tool.
enum class Side { Left = 0, Right = 1 };

inline constexpr int kNumSides = 2;
inline constexpr std::size_t kActionDim = 10;  // 3 translation, 3 rotation, 4 closure
inline constexpr std::size_t kFingersPerHand = 4;

/// Fixed workspace constants plus the quasi-static stepping limits. One
/// instance is shared by demo generation, task construction, the simulator,
/// and evaluation so thresholds stay in a single place.
struct SceneConfig {
  double table_height = 0.7;     // m, table top above ground
  double object_spacing = 0.4;   // m, tool-object horizontal gap
  double object_distance = 0.5;  // m, from the robot base line (+y)
  double hand_spacing = 0.68;    // m, between wrist home positions
  double hand_home_height = 0.2; // m, wrist home above the table
  double hand_home_forward = 0.3;// m, wrist home along +y

  std::size_t episode_length = 1000;
  double control_dt = 0.1;          // s per simulation step
  double max_step_translation = 0.02;  // m per step per axis
  double max_step_rotation = 0.05;     // rad per step per axis
  double max_step_closure = 0.05;      // closure units per step per finger

  double c_grasp = 0.5;    // mean closure to attach
  double c_release = 0.3;  // mean closure below which a grasp releases
  std::size_t u_consecutive = 10;
  double fall_speed = 0.5;  // m/s descent for unsupported objects

  double table_clearance = 0.0;  // z-offset preprocessing target above table
  double delta_ref = 0.005;      // m, reference-timestep jump threshold
  std::size_t grasp_center_points = 50;

  /// Home wrist pose for a side: palm-down identity orientation.
  Pose hand_home_pose(Side side) const {
    const double sx = side == Side::Left ? -0.5 : 0.5;
    Pose p;
    p.position = Vec3{sx * hand_spacing, hand_home_forward,
                      table_height + hand_home_height};
    return p;
  }

  /// Standard on-table position for the tool (+x) or object (-x) given the
  /// shape's resting height.
  Vec3 object_home_position(Side side, double bottom_offset) const {
    const double sx = side == Side::Left ? -0.5 : 0.5;
    return Vec3{sx * object_spacing, object_distance,
                table_height + bottom_offset};
  }
};

/// Canonical fingertip offsets in the wrist frame; closing a finger scales
/// its offset by (1 - 0.5 * closure).
Vec3 fingertip_offset(std::size_t finger);
Vec3 fingertip_position(const Pose& wrist, std::size_t finger, double closure);

}  // namespace bidex
