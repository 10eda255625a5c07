#include "bidex/demo_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bidex {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kLiftPerStep = 0.015;
constexpr double kToolLiftDrift = 0.008;  // radial drift during the tool lift
constexpr std::size_t kLiftSteps = 10;

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double default_amplitude(MotionTemplate t) {
  switch (t) {
    case MotionTemplate::LiftHold: return 0.10;   // extra rise, m
    case MotionTemplate::Pour: return 90.0;       // deg
    case MotionTemplate::DustSweep: return 0.03;  // lateral amplitude, m
    case MotionTemplate::EmptyTilt: return 120.0; // deg
  }
  return 0.0;
}

struct ToolMotion {
  Vec3 translation;   // relative to the lifted hold position
  UnitQuat rotation;  // about the tool's own origin
};

/// Relative tool pose k template steps after the lifted hold pose.
ToolMotion template_offset(MotionTemplate motion, double amplitude,
                           std::size_t k, std::size_t n_steps,
                           const Vec3& toward_object) {
  ToolMotion m;
  const Vec3 lateral{-toward_object.y, toward_object.x, 0.0};
  switch (motion) {
    case MotionTemplate::LiftHold: {
      const std::size_t n_move = std::min<std::size_t>(12, n_steps);
      const double rise_per_step = amplitude / static_cast<double>(n_move);
      const double j = static_cast<double>(std::min(k, n_move));
      m.translation = toward_object * (0.006 * j) + Vec3{0, 0, rise_per_step * j};
      break;
    }
    case MotionTemplate::Pour: {
      const std::size_t n_ap = std::min<std::size_t>(12, n_steps / 2);
      const double j_ap = static_cast<double>(std::min(k, n_ap));
      m.translation = toward_object * (0.009 * j_ap);
      if (k > n_ap) {
        const double frac = static_cast<double>(k - n_ap) /
                            static_cast<double>(n_steps - n_ap);
        const double theta = amplitude * kDegToRad * smoothstep(frac);
        m.rotation = UnitQuat::from_axis_angle(lateral, theta);
      }
      break;
    }
    case MotionTemplate::DustSweep: {
      const std::size_t n_ap = std::min<std::size_t>(8, n_steps / 3);
      const double j_ap = static_cast<double>(std::min(k, n_ap));
      m.translation = toward_object * (0.008 * j_ap);
      if (k > n_ap) {
        const double frac = static_cast<double>(k - n_ap) /
                            static_cast<double>(n_steps - n_ap);
        const double sweep =
            amplitude * std::sin(2.0 * std::numbers::pi * 2.0 * frac);
        m.translation += lateral * sweep;
      }
      break;
    }
    case MotionTemplate::EmptyTilt: {
      const std::size_t n_ap = std::min<std::size_t>(10, n_steps / 2);
      const double j_ap = static_cast<double>(std::min(k, n_ap));
      m.translation = toward_object * (0.008 * j_ap) + Vec3{0, 0, 0.002 * j_ap};
      if (k > n_ap) {
        const double frac = static_cast<double>(k - n_ap) /
                            static_cast<double>(n_steps - n_ap);
        const double theta = amplitude * kDegToRad * smoothstep(frac);
        m.rotation = UnitQuat::from_axis_angle(lateral, theta);
      }
      break;
    }
  }
  return m;
}

}  // namespace

MotionTemplate parse_motion_template(const std::string& name) {
  if (name == "lift-hold") return MotionTemplate::LiftHold;
  if (name == "pour") return MotionTemplate::Pour;
  if (name == "dust-sweep") return MotionTemplate::DustSweep;
  if (name == "empty-tilt") return MotionTemplate::EmptyTilt;
  throw std::invalid_argument("unknown motion template: " + name);
}

std::string motion_template_name(MotionTemplate t) {
  switch (t) {
    case MotionTemplate::LiftHold: return "lift-hold";
    case MotionTemplate::Pour: return "pour";
    case MotionTemplate::DustSweep: return "dust-sweep";
    case MotionTemplate::EmptyTilt: return "empty-tilt";
  }
  return "lift-hold";
}

DemoTrajectory generate_synthetic_demo(const SyntheticDemoSpec& spec,
                                       const SceneConfig& scene,
                                       RngStream& rng) {
  const double amplitude =
      spec.amplitude > 0.0 ? spec.amplitude : default_amplitude(spec.motion);

  DemoTrajectory demo;
  demo.demo_id = spec.demo_id;
  demo.action_label = motion_template_name(spec.motion);
  demo.tool_name = spec.tool_name;
  demo.object_name = spec.object_name;
  demo.tool_shape = spec.tool_shape;
  demo.object_shape = spec.object_shape;
  demo.tool_points = sample_surface_points(spec.tool_shape, kDemoPointCount, rng);
  demo.object_points =
      sample_surface_points(spec.object_shape, kDemoPointCount, rng);

  // Demonstrated rest poses sit a deterministic shift away from the scene's
  // standard starts; aligning to them is the stage-one task.
  const Vec3 placement{rng.uniform(-0.015, 0.015),
                       kDemoPlacementShift + rng.uniform(-0.008, 0.008), 0.0};

  struct SideTrack {
    Vec3 rest;       // demonstrated on-table object position
    Vec3 pre_grasp;  // wrist hover at the grasp
    Pose home;       // wrist start
  };
  SideTrack sides[2];
  const PrimitiveShape* shapes[2] = {&spec.object_shape, &spec.tool_shape};
  for (int i = 0; i < 2; ++i) {
    const Side side = static_cast<Side>(i);
    sides[i].rest =
        scene.object_home_position(side, shapes[i]->bottom_offset()) + placement;
    sides[i].pre_grasp =
        sides[i].rest + Vec3{0, 0, shapes[i]->top_offset() + kWristClearance};
    sides[i].home = scene.hand_home_pose(side);
  }

  const std::size_t t_grasp = std::max<std::size_t>(6, spec.length / 3);
  const std::size_t t_hold = t_grasp + kLiftSteps;
  if (t_hold + 8 > spec.length - 1) {
    throw std::invalid_argument(
        "synthetic demo length too short for the motion phases: need at least " +
        std::to_string(t_hold + 9) + " steps");
  }
  const std::size_t n_template = spec.length - 1 - t_hold;

  Vec3 toward_object = sides[0].rest - sides[1].rest;
  toward_object.z = 0.0;
  toward_object = toward_object * (1.0 / toward_object.norm());

  // Grip transforms freeze at the grasp over the rest poses.
  Pose grip[2];
  for (int i = 0; i < 2; ++i) {
    Pose obj_rest;
    obj_rest.position = sides[i].rest;
    Pose wrist;
    wrist.position = sides[i].pre_grasp;
    grip[i] = obj_rest.inverse().compose(wrist);
  }

  demo.steps.resize(spec.length);
  for (std::size_t s = 0; s < spec.length; ++s) {
    DemoStep& step = demo.steps[s];

    // Object (left target): vertical rise after the grasp, then hold.
    Pose obj_pose;
    obj_pose.position = sides[0].rest;
    if (s > t_grasp) {
      const double raised =
          kLiftPerStep * static_cast<double>(std::min(s, t_hold) - t_grasp);
      obj_pose.position.z += raised;
    }

    // Tool (right): diagonal rise, then the template motion. The radial
    // component makes the very first post-grasp step a clear distance jump.
    Pose tool_pose;
    tool_pose.position = sides[1].rest;
    if (s > t_grasp) {
      const double j = static_cast<double>(std::min(s, t_hold) - t_grasp);
      tool_pose.position += toward_object * (kToolLiftDrift * j) +
                            Vec3{0, 0, kLiftPerStep * j};
    }
    if (s > t_hold) {
      const ToolMotion m = template_offset(spec.motion, amplitude, s - t_hold,
                                           n_template, toward_object);
      tool_pose.position += m.translation;
      tool_pose.orientation = m.rotation;
    }
    step.object_pose = obj_pose;
    step.tool_pose = tool_pose;

    // Wrists: eased approach, then rigid coupling to the held object.
    double closure = 0.0;
    Pose wrists[2];
    if (s < t_grasp) {
      const double a =
          smoothstep(static_cast<double>(s) / static_cast<double>(t_grasp));
      for (int i = 0; i < 2; ++i) {
        wrists[i].position = sides[i].home.position +
                             (sides[i].pre_grasp - sides[i].home.position) * a;
        wrists[i].orientation = sides[i].home.orientation;
      }
      const double close_window = 8.0;
      const double cs = (static_cast<double>(s) -
                         (static_cast<double>(t_grasp) - close_window)) /
                        close_window;
      closure = kDemoGraspClosure * smoothstep(cs);
    } else {
      closure = kDemoGraspClosure;
      wrists[0] = step.object_pose.compose(grip[0]);
      wrists[1] = step.tool_pose.compose(grip[1]);
    }
    step.left_wrist = wrists[0];
    step.right_wrist = wrists[1];
    for (std::size_t f = 0; f < kFingersPerHand; ++f) {
      step.left_fingertips[f] = fingertip_position(wrists[0], f, closure);
      step.right_fingertips[f] = fingertip_position(wrists[1], f, closure);
    }
  }
  return demo;
}

std::vector<DemoTrajectory> synthesize_dataset(
    std::size_t count, const std::vector<MotionTemplate>& templates,
    std::uint64_t seed, const SceneConfig& scene, std::size_t length) {
  if (count == 0 || templates.empty()) {
    throw std::invalid_argument(
        "synthesize_dataset: count and templates must be nonempty");
  }

  struct Instance {
    std::string name;
    PrimitiveShape shape;
  };
  // Small instance pools so tool and object names recur across demos.
  const std::size_t pool = std::max<std::size_t>(2, (count + 2) / 3);
  RngStream pool_rng(seed, 0x701ull);
  auto make_pool = [&](const std::string& prefix, PrimitiveShape::Kind kind) {
    std::vector<Instance> out;
    for (std::size_t i = 0; i < pool; ++i) {
      Instance inst;
      inst.name = prefix + std::to_string(i);
      switch (kind) {
        case PrimitiveShape::Kind::Cylinder:
          inst.shape = PrimitiveShape::cylinder(pool_rng.uniform(0.025, 0.04),
                                                pool_rng.uniform(0.10, 0.14));
          break;
        case PrimitiveShape::Kind::Shell:
          inst.shape = PrimitiveShape::shell(pool_rng.uniform(0.05, 0.08));
          break;
        case PrimitiveShape::Kind::Disc:
          inst.shape = PrimitiveShape::disc(pool_rng.uniform(0.07, 0.10));
          break;
        case PrimitiveShape::Kind::Box:
          inst.shape = PrimitiveShape::box(pool_rng.uniform(0.03, 0.05),
                                           pool_rng.uniform(0.14, 0.2),
                                           pool_rng.uniform(0.02, 0.04));
          break;
      }
      out.push_back(inst);
    }
    return out;
  };

  const auto cups = make_pool("cup", PrimitiveShape::Kind::Cylinder);
  const auto bowls = make_pool("bowl", PrimitiveShape::Kind::Shell);
  const auto plates = make_pool("plate", PrimitiveShape::Kind::Disc);
  const auto brushes = make_pool("brush", PrimitiveShape::Kind::Box);

  RngStream pick_rng(seed, 0x702ull);
  std::vector<DemoTrajectory> demos;
  demos.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const MotionTemplate motion = templates[i % templates.size()];
    SyntheticDemoSpec spec;
    spec.motion = motion;
    spec.length = length;
    char id[32];
    std::snprintf(id, sizeof(id), "demo_%04zu", i);
    spec.demo_id = id;
    const Instance* tool = nullptr;
    const Instance* object = nullptr;
    switch (motion) {
      case MotionTemplate::LiftHold:
      case MotionTemplate::Pour:
        tool = &cups[pick_rng.next_below(cups.size())];
        object = &bowls[pick_rng.next_below(bowls.size())];
        break;
      case MotionTemplate::DustSweep:
        tool = &brushes[pick_rng.next_below(brushes.size())];
        object = &plates[pick_rng.next_below(plates.size())];
        break;
      case MotionTemplate::EmptyTilt:
        tool = &bowls[pick_rng.next_below(bowls.size())];
        object = &plates[pick_rng.next_below(plates.size())];
        break;
    }
    spec.tool_name = tool->name;
    spec.tool_shape = tool->shape;
    spec.object_name = object->name;
    spec.object_shape = object->shape;
    RngStream demo_rng(seed, 0x10000ull + i);
    demos.push_back(generate_synthetic_demo(spec, scene, demo_rng));
  }
  return demos;
}

}  // namespace bidex
