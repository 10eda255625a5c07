#include <doctest.h>

#include <cmath>

#include "bidex/demo_gen.hpp"
#include "bidex/env.hpp"
#include "bidex/task.hpp"

using namespace bidex;

namespace {

TaskSpec make_task(const SceneConfig& scene, MotionTemplate m = MotionTemplate::LiftHold,
                   std::uint64_t seed = 1) {
  RngStream rng(seed, 0);
  SyntheticDemoSpec spec;
  spec.demo_id = "env" + std::to_string(seed);
  spec.motion = m;
  spec.tool_name = "cup0";
  spec.object_name = "bowl0";
  spec.tool_shape = PrimitiveShape::cylinder(0.03, 0.12);
  spec.object_shape = PrimitiveShape::shell(0.06);
  spec.length = 44;
  DemoTrajectory d = generate_synthetic_demo(spec, scene, rng);
  d = apply_z_offset(d, scene.table_height, scene.table_clearance);
  return build_task(d, scene);
}

Action zero_action() { return Action{}; }

}  // namespace

TEST_CASE("reset puts the rig at the documented start") {
  SceneConfig scene;
  scene.episode_length = 50;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  const StepResult r = env.reset();

  const EnvState& s = env.state();
  for (int i = 0; i < kNumSides; ++i) {
    for (double c : s.hands[i].closure) CHECK(c == 0.0);
    CHECK(s.hands[i].wrist_linear_velocity.norm() == 0.0);
    CHECK(s.hands[i].wrist_angular_velocity.norm() == 0.0);
  }
  CHECK(s.tool.linear_velocity.norm() == 0.0);
  CHECK(s.object.angular_velocity.norm() == 0.0);
  CHECK(s.stage == Stage::Aligning);
  CHECK(s.t == 0);
  CHECK(distance(s.hands[0].wrist_pose.position,
                 s.hands[1].wrist_pose.position) ==
        doctest::Approx(scene.hand_spacing));

  // Observation layout: widths and the one-hot slot.
  CHECK(r.obs_left.size() == 56 + 1);
  CHECK(r.obs_right.size() == teacher_obs_width(1));
  const std::size_t one_hot_at = 7 + 6 + 4 + 4 + 12 + 7 + 3 + 3;
  CHECK(r.obs_left[one_hot_at] == 1.0);

  // Velocity slots are zero at reset.
  for (std::size_t i = 7; i < 13; ++i) CHECK(r.obs_left[i] == 0.0);

  // Reset twice gives identical observations.
  const StepResult r2 = env.reset();
  CHECK(r.obs_left == r2.obs_left);
  CHECK(r.obs_right == r2.obs_right);
}

TEST_CASE("teacher observation width matches the documented layout") {
  for (std::size_t g : {1u, 2u, 5u}) {
    CHECK(teacher_obs_width(g) == 56 + g);
  }
}

TEST_CASE("zero actions leave objects at rest in stage aligning") {
  SceneConfig scene;
  scene.episode_length = 20;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();
  for (int i = 0; i < 20; ++i) {
    const StepResult r = env.step(zero_action(), zero_action());
    CHECK(r.flags.stage == Stage::Aligning);
  }
  const EnvState& s = env.state();
  CHECK(distance(s.tool.pose.position, task.initial_tool_pose.position) == 0.0);
  CHECK(distance(s.object.pose.position, task.initial_object_pose.position) == 0.0);
  CHECK(s.done);
  CHECK_THROWS_AS(env.step(zero_action(), zero_action()), std::logic_error);
}

TEST_CASE("action clamping caps per-step wrist motion") {
  SceneConfig scene;
  scene.episode_length = 100;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();
  RngStream rng(9, 9);
  for (int i = 0; i < 50; ++i) {
    Action a;
    for (double& v : a) v = rng.uniform(-8.0, 8.0);  // far out of range
    const Pose before = env.state().hand(Side::Right).wrist_pose;
    const std::array<double, kFingersPerHand> closure_before =
        env.state().hand(Side::Right).closure;
    env.step(zero_action(), a);
    const Pose after = env.state().hand(Side::Right).wrist_pose;
    CHECK(std::abs(after.position.x - before.position.x) <=
          scene.max_step_translation + 1e-12);
    CHECK(std::abs(after.position.y - before.position.y) <=
          scene.max_step_translation + 1e-12);
    CHECK(std::abs(after.position.z - before.position.z) <=
          scene.max_step_translation + 1e-12);
    const double angle = quat_dist(after.orientation, before.orientation);
    CHECK(angle <= std::sqrt(3.0) * scene.max_step_rotation + 1e-9);
    for (std::size_t f = 0; f < kFingersPerHand; ++f) {
      CHECK(std::abs(env.state().hand(Side::Right).closure[f] -
                     closure_before[f]) <= scene.max_step_closure + 1e-12);
    }
  }
}

TEST_CASE("attach check thresholds") {
  RewardWeights weights;
  HandState hand;
  hand.wrist_pose.position = Vec3{0, 0, 0};
  ObjectState obj;
  const Vec3 gc{0, 0, 0};

  SUBCASE("all conditions met") {
    for (double& c : hand.closure) c = 1.0;
    // Fingertips at closure 1 sit within the summed gate around the wrist.
    CHECK(attach_check(hand, obj, gc, weights, 0.5));
  }
  SUBCASE("wrist too far") {
    for (double& c : hand.closure) c = 1.0;
    hand.wrist_pose.position = Vec3{0.13, 0, 0};
    CHECK_FALSE(attach_check(hand, obj, gc, weights, 0.5));
  }
  SUBCASE("closure below the grasp threshold") {
    for (double& c : hand.closure) c = 0.4;
    CHECK_FALSE(attach_check(hand, obj, gc, weights, 0.5));
  }
}

TEST_CASE("attached objects follow the wrist exactly and release on open") {
  SceneConfig scene;
  scene.episode_length = 400;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();

  // Script the right hand onto the tool's grasp feature, then close.
  const Vec3 gc_now =
      transform_point(env.state().tool.pose, task.tool_grasp_local);
  Pose grasp_pose;
  grasp_pose.position = gc_now + Vec3{0, 0, 0.03};
  env.scripted_place_hand(Side::Right, grasp_pose, 1.0);
  REQUIRE(env.state().tool.attachment == Attachment::Right);

  // Rigid-follow invariant across arbitrary wrist motion.
  RngStream rng(3, 1);
  for (int i = 0; i < 60; ++i) {
    Action a{};
    for (int j = 0; j < 6; ++j) a[j] = rng.uniform(-1.0, 1.0);
    for (int j = 6; j < 10; ++j) a[j] = 1.0;  // stay closed
    env.step(zero_action(), a);
    const EnvState& s = env.state();
    REQUIRE(s.tool.attachment == Attachment::Right);
    const Pose expected =
        s.hand(Side::Right).wrist_pose.compose(s.tool.attach_offset);
    CHECK(distance(expected.position, s.tool.pose.position) == 0.0);
    CHECK(std::abs(expected.orientation.dot(s.tool.pose.orientation)) ==
          doctest::Approx(1.0));
  }

  // A pure translation moves the attached tool by exactly that translation.
  {
    const Vec3 before = env.state().tool.pose.position;
    Action a{};
    a[0] = 1.0;
    env.step(zero_action(), a);
    const Vec3 after = env.state().tool.pose.position;
    CHECK(after.x - before.x ==
          doctest::Approx(scene.max_step_translation).epsilon(1e-12));
    CHECK(after.y - before.y == doctest::Approx(0.0));
  }

  // Opening the hand releases the object, which then falls to rest.
  {
    Action open{};
    for (int j = 6; j < 10; ++j) open[j] = -1.0;
    for (int i = 0; i < 20 && env.state().tool.attachment != Attachment::None;
         ++i) {
      env.step(zero_action(), open);
    }
    CHECK(env.state().tool.attachment == Attachment::None);
    for (int i = 0; i < 100; ++i) env.step(zero_action(), zero_action());
    // Resting: lowest surface point on the table.
    double min_z = 1e9;
    const EnvState& s = env.state();
    for (const Vec3& p : task.tool_points) {
      min_z = std::min(min_z, transform_point(s.tool.pose, p).z);
    }
    CHECK(min_z >= scene.table_height - 1e-9);
    CHECK(min_z <= scene.table_height + 1e-6);
  }
}

TEST_CASE("unattached resting objects never penetrate the table") {
  SceneConfig scene;
  scene.episode_length = 60;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();
  RngStream rng(17, 0);
  for (int i = 0; i < 60; ++i) {
    Action a, b;
    for (double& v : a) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    env.step(a, b);
    const EnvState& s = env.state();
    for (const auto* obj : {&s.tool, &s.object}) {
      if (obj->attachment != Attachment::None) continue;
      const auto& pts = obj == &s.tool ? task.tool_points : task.object_points;
      for (std::size_t k = 0; k < pts.size(); k += 64) {
        CHECK(transform_point(obj->pose, pts[k]).z >=
              scene.table_height - 1e-9);
      }
    }
  }
}

TEST_CASE("scripted replay drives the stage machine to tracking") {
  SceneConfig scene;
  scene.episode_length = 300;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();

  // Follow the demonstrated wrists with clamped actions after snapping the
  // objects onto their demo start poses (the validated corridor).
  env.scripted_place_objects(task.demo_steps[0].tool_pose,
                             task.demo_steps[0].object_pose);
  bool reached_tracking = false;
  std::size_t demo_idx = 0;
  for (std::size_t t = 0; t < 250 && !env.state().done; ++t) {
    if (demo_idx + 1 < task.demo_steps.size()) demo_idx += 1;
    const DemoStep& target = task.demo_steps[demo_idx];
    Action acts[2];
    const Pose targets[2] = {target.left_wrist, target.right_wrist};
    for (int side = 0; side < 2; ++side) {
      const HandState& hand = env.state().hand(static_cast<Side>(side));
      const Vec3 dp = targets[side].position - hand.wrist_pose.position;
      acts[side][0] = std::clamp(dp.x / scene.max_step_translation, -1.0, 1.0);
      acts[side][1] = std::clamp(dp.y / scene.max_step_translation, -1.0, 1.0);
      acts[side][2] = std::clamp(dp.z / scene.max_step_translation, -1.0, 1.0);
      const Vec3 rv = quat_mul(targets[side].orientation,
                               hand.wrist_pose.orientation.conjugate())
                          .to_rotvec();
      acts[side][3] = std::clamp(rv.x / scene.max_step_rotation, -1.0, 1.0);
      acts[side][4] = std::clamp(rv.y / scene.max_step_rotation, -1.0, 1.0);
      acts[side][5] = std::clamp(rv.z / scene.max_step_rotation, -1.0, 1.0);
      const double target_closure =
          demo_idx >= task.reference_index ? 1.0 : 0.0;
      for (std::size_t f = 0; f < kFingersPerHand; ++f) {
        acts[side][6 + f] =
            std::clamp((target_closure - hand.closure[f]) /
                           scene.max_step_closure,
                       -1.0, 1.0);
      }
    }
    const StepResult r = env.step(acts[0], acts[1]);
    if (r.flags.stage == Stage::Tracking) {
      reached_tracking = true;
      break;
    }
  }
  CHECK(reached_tracking);
}

TEST_CASE("stage sequence is aligning then tracking, never back") {
  SceneConfig scene;
  scene.episode_length = 120;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);

  PolicyFn zero_policy = [](const EnvState&, RngStream&) {
    return std::array<Action, kNumSides>{};
  };
  RngStream rng(1, 1);
  const EpisodeLog log = run_episode(env, zero_policy, rng);
  REQUIRE(log.steps.size() == scene.episode_length);
  bool seen_tracking = false;
  for (const EpisodeStepRecord& s : log.steps) {
    if (seen_tracking) CHECK(s.stage == Stage::Tracking);
    if (s.stage == Stage::Tracking) seen_tracking = true;
  }
  // A zero policy never aligns anything.
  CHECK_FALSE(seen_tracking);
  CHECK(log.tracking_start() == -1);
}

TEST_CASE("episodes are bit-identical under equal seeds and actions") {
  SceneConfig scene;
  scene.episode_length = 40;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);

  auto roll = [&]() {
    BimanualEnv env(task, scene, weights, 1);
    RngStream rng(77, 0);
    PolicyFn noisy = [](const EnvState&, RngStream& r) {
      std::array<Action, kNumSides> a;
      for (auto& act : a) {
        for (double& v : act) v = r.uniform(-1.0, 1.0);
      }
      return a;
    };
    return episode_log_to_jsonl(run_episode(env, noisy, rng));
  };
  CHECK(roll() == roll());
}

TEST_CASE("student observation: cloud, noise, and future clamping") {
  SceneConfig scene;
  scene.episode_length = 500;
  RewardWeights weights;
  const TaskSpec task = make_task(scene);
  BimanualEnv env(task, scene, weights, 1);
  env.reset();
  RngStream cloud_rng(5, 5);
  const auto presampled =
      sample_surface_points(task.object_shape, 4096, cloud_rng);

  SUBCASE("zero noise keeps points on the posed superset") {
    RngStream rng(8, 1);
    const StudentObs obs = assemble_student_obs(env.state(), Side::Left,
                                                presampled, 128, 5, 0.0, rng);
    CHECK(obs.proprio.size() == student_proprio_width());
    CHECK(obs.points.size() == 128);
    const Pose pose = env.state().object.pose;
    for (const Vec3& p : obs.points) {
      double best = 1e9;
      for (const Vec3& c : presampled) {
        best = std::min(best, distance(p, transform_point(pose, c)));
      }
      CHECK(best < 1e-12);
    }
  }
  SUBCASE("k = 0 yields no future block") {
    RngStream rng(8, 2);
    const StudentObs obs = assemble_student_obs(env.state(), Side::Left,
                                                presampled, 64, 0, 0.0, rng);
    CHECK(obs.future_positions.empty());
  }
  SUBCASE("future indices clamp at the final demo position") {
    RngStream rng(8, 3);
    // Force the tracking stage at the last demo index.
    EnvState& s = env.mutable_state();
    s.stage = Stage::Tracking;
    s.t_since_tracking = 100000;
    s.current_track_index = task.track_length() - 1;
    const StudentObs obs = assemble_student_obs(s, Side::Left, presampled, 64,
                                                5, 0.0, rng);
    REQUIRE(obs.future_positions.size() == 5);
    const Vec3 last = task.object_track.back().position;
    for (const Vec3& f : obs.future_positions) {
      CHECK(distance(f, last) == 0.0);
    }
  }
  SUBCASE("aligning stage serves the first demo positions") {
    RngStream rng(8, 4);
    const StudentObs obs = assemble_student_obs(env.state(), Side::Right,
                                                presampled, 64, 3, 0.0, rng);
    REQUIRE(obs.future_positions.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(distance(obs.future_positions[k],
                     task.tool_track[k].position) == 0.0);
    }
  }
}
