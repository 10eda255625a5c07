#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "bidex/geometry.hpp"
#include "bidex/rng.hpp"
#include "bidex/scene.hpp"
#include "bidex/shapes.hpp"

namespace bidex {

inline constexpr std::size_t kDemoPointCount = 1024;

/// One recorded timestep of a bimanual demonstration.
struct DemoStep {
  Pose tool_pose;
  Pose object_pose;
  Pose left_wrist;
  Pose right_wrist;
  std::array<Vec3, kFingersPerHand> left_fingertips{};
  std::array<Vec3, kFingersPerHand> right_fingertips{};
};

/// A demonstration: pose track plus canonical-frame surface point sets for
/// the tool (right hand) and target object (left hand).
struct DemoTrajectory {
  std::string demo_id;
  std::string action_label;
  std::string tool_name;
  std::string object_name;
  PrimitiveShape tool_shape;
  PrimitiveShape object_shape;
  std::vector<Vec3> tool_points;    // exactly kDemoPointCount
  std::vector<Vec3> object_points;  // exactly kDemoPointCount
  std::vector<DemoStep> steps;      // length >= 2

  std::size_t length() const { return steps.size(); }
};

/// Parses the UTF-8 JSON demo format. Quaternions are renormalized on load.
/// Throws std::runtime_error naming the offending field on schema violations,
/// including too-short tracks and wrong point-set cardinality.
DemoTrajectory parse_demo(const std::string& bytes);

/// Inverse of parse_demo; emits the documented JSON schema.
std::string serialize_demo(const DemoTrajectory& traj);

DemoTrajectory load_demo_file(const std::string& path);
void save_demo_file(const DemoTrajectory& traj, const std::string& path);

/// Smallest t with |d(t+1) - d(t)| > delta_ref, where d is the tool-object
/// center distance; 0 when no such step exists.
std::size_t find_reference_timestep(const DemoTrajectory& traj,
                                    double delta_ref);

/// Shifts every position by one constant z offset so the minimum tool/object
/// bottom across the trajectory lands exactly on table_height + clearance.
DemoTrajectory apply_z_offset(const DemoTrajectory& traj, double table_height,
                              double clearance);

/// Mean of the L points nearest the anchor, where the anchor is the average
/// of the wrist and fingertip positions.
Vec3 compute_grasp_center(const std::vector<Vec3>& world_points,
                          const Vec3& wrist_anchor,
                          const std::vector<Vec3>& fingertip_anchors,
                          std::size_t L);

/// Train / held-out task partition. A held-out task whose tool and object
/// names both appear in training goes to test_comb, otherwise test_new.
struct TaskSplit {
  std::vector<std::string> train;
  std::vector<std::string> test_comb;
  std::vector<std::string> test_new;
};

/// Per-(action, tool shape kind, object shape kind) shuffled split with
/// floor rounding and at least one training item per nonempty group.
TaskSplit split_tasks(const std::vector<DemoTrajectory>& demos,
                      double train_fraction, RngStream& rng);

std::string demo_group_id(const DemoTrajectory& demo);

}  // namespace bidex
