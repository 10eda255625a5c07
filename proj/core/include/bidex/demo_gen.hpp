#pragma once

#include <string>
#include <vector>

#include "bidex/demo.hpp"
#include "bidex/scene.hpp"

namespace bidex {

enum class MotionTemplate { LiftHold, Pour, DustSweep, EmptyTilt };

MotionTemplate parse_motion_template(const std::string& name);
std::string motion_template_name(MotionTemplate t);

/// Recipe for one synthetic demonstration.
struct SyntheticDemoSpec {
  std::string demo_id;
  MotionTemplate motion = MotionTemplate::LiftHold;
  std::string tool_name;
  std::string object_name;
  PrimitiveShape tool_shape;
  PrimitiveShape object_shape;
  std::size_t length = 60;
  /// Template units: extra rise (m) for lift-hold, tilt angle (deg) for pour
  /// and empty-tilt, sweep amplitude (m) for dust-sweep. Non-positive values
  /// select the template default.
  double amplitude = 0.0;
};

/// Kinematically smooth trajectory. The objects rest at table positions
/// displaced from the scene's standard starts while the wrists approach, so
/// aligning the simulation to the demonstration is a genuine transport task.
/// Motion begins right after the grasp: the tool rises diagonally (its first
/// step shifts the tool-object distance past any reasonable jump threshold,
/// anchoring the reference timestep at the grasp moment), the object rises
/// vertically, and the tool then runs the template motion.
DemoTrajectory generate_synthetic_demo(const SyntheticDemoSpec& spec,
                                       const SceneConfig& scene,
                                       RngStream& rng);

/// Deterministic dataset: instances drawn from small per-template tool and
/// object pools so names recur across demos.
std::vector<DemoTrajectory> synthesize_dataset(
    std::size_t count, const std::vector<MotionTemplate>& templates,
    std::uint64_t seed, const SceneConfig& scene, std::size_t length = 60);

/// Height both objects are raised after the grasp.
inline constexpr double kDemoLiftHeight = 0.15;
/// Nominal displacement of the demo rest poses from the scene starts.
inline constexpr double kDemoPlacementShift = 0.115;
/// Wrist hover distance above the object's top surface at the grasp.
inline constexpr double kWristClearance = 0.08;
/// Demonstrated finger closure while holding.
inline constexpr double kDemoGraspClosure = 0.8;

}  // namespace bidex
