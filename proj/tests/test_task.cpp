#include <doctest.h>

#include <filesystem>
#include <set>

#include "bidex/demo_gen.hpp"
#include "bidex/hash.hpp"
#include "bidex/task.hpp"

using namespace bidex;
namespace fs = std::filesystem;

namespace {

DemoTrajectory make_demo(MotionTemplate motion, std::uint64_t seed,
                         const SceneConfig& scene, std::size_t length = 44) {
  RngStream rng(seed, 0);
  SyntheticDemoSpec spec;
  spec.demo_id = "t" + std::to_string(seed);
  spec.motion = motion;
  spec.tool_name = "cup0";
  spec.object_name = "bowl0";
  spec.tool_shape = PrimitiveShape::cylinder(0.03, 0.12);
  spec.object_shape = PrimitiveShape::shell(0.06);
  spec.length = length;
  DemoTrajectory d = generate_synthetic_demo(spec, scene, rng);
  return apply_z_offset(d, scene.table_height, scene.table_clearance);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bidex_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("build_task assembles references, centers, and tracks") {
  SceneConfig scene;
  const DemoTrajectory demo = make_demo(MotionTemplate::Pour, 1, scene);
  const TaskSpec task = build_task(demo, scene);

  CHECK(task.reference_index ==
        find_reference_timestep(demo, scene.delta_ref));
  CHECK(task.track_length() == demo.length() - task.reference_index);
  CHECK(task.track_length() >= 2);

  // Initial scene poses: standard table placement.
  CHECK(task.initial_tool_pose.position.x == doctest::Approx(0.2));
  CHECK(task.initial_object_pose.position.x == doctest::Approx(-0.2));
  CHECK(task.initial_tool_pose.position.y == doctest::Approx(0.5));

  // Grasp centers live on (or inside) the posed point clouds' bounding
  // sphere near the reference poses.
  CHECK(distance(task.grasp_center_object,
                 task.object_reference_pose.position) < 0.12);
  CHECK(distance(task.grasp_center_tool,
                 task.tool_reference_pose.position) < 0.12);

  // Determinism: identical demo content gives identical task content.
  const TaskSpec again = build_task(demo, scene);
  CHECK(distance(again.grasp_center_tool, task.grasp_center_tool) == 0.0);
  CHECK(again.reference_index == task.reference_index);
}

TEST_CASE("build_task rejects demos without tracking steps") {
  SceneConfig scene;
  DemoTrajectory demo = make_demo(MotionTemplate::LiftHold, 2, scene);
  // Cut the trajectory right after the reference step: the jump now lands at
  // the final transition, leaving nothing to track.
  const std::size_t t_ref = find_reference_timestep(demo, scene.delta_ref);
  demo.steps.resize(t_ref + 2);
  demo.steps[t_ref + 1] = demo.steps[t_ref];
  demo.steps[t_ref + 1].tool_pose.position.x += 0.05;
  CHECK_THROWS_WITH_AS(build_task(demo, scene), doctest::Contains("degenerate"),
                       std::runtime_error);
}

TEST_CASE("replay validation accepts generator output") {
  SceneConfig scene;
  RewardWeights weights;
  for (MotionTemplate m : {MotionTemplate::LiftHold, MotionTemplate::Pour,
                           MotionTemplate::DustSweep, MotionTemplate::EmptyTilt}) {
    const DemoTrajectory demo = make_demo(m, 7 + static_cast<int>(m), scene);
    const TaskSpec task = build_task(demo, scene);
    const ReplayReport report = replay_validate(task, scene, weights);
    CAPTURE(motion_template_name(m));
    CAPTURE(report.reason);
    CHECK(report.valid);
  }
}

TEST_CASE("replay validation rejects a displaced grasp center") {
  SceneConfig scene;
  RewardWeights weights;
  const DemoTrajectory demo = make_demo(MotionTemplate::LiftHold, 3, scene);
  TaskSpec task = build_task(demo, scene);
  task.tool_grasp_local.z += 1.0;  // grasp feature nowhere near the hand
  const ReplayReport report = replay_validate(task, scene, weights);
  CHECK_FALSE(report.valid);
  CHECK(report.first_failing_step == task.reference_index);
}

TEST_CASE("replay validation pinpoints an injected teleport") {
  SceneConfig scene;
  RewardWeights weights;
  DemoTrajectory demo = make_demo(MotionTemplate::Pour, 4, scene);
  const std::size_t t_ref = find_reference_timestep(demo, scene.delta_ref);
  const std::size_t bad = t_ref + 6;
  for (std::size_t s = bad; s < demo.length(); ++s) {
    demo.steps[s].tool_pose.position.y += 0.5;
  }
  const TaskSpec task = build_task(demo, scene);
  const ReplayReport report = replay_validate(task, scene, weights);
  CHECK_FALSE(report.valid);
  CHECK(report.first_failing_step == bad);
  CHECK(report.failure_distance > 0.4);
}

TEST_CASE("build_task_set filters, groups, splits, and reruns identically") {
  SceneConfig scene;
  RewardWeights weights;
  TempDir dir;

  const auto demos = synthesize_dataset(
      8, {MotionTemplate::LiftHold, MotionTemplate::Pour}, 21, scene, 44);
  std::string manifest = "{\"demos\":[";
  for (std::size_t i = 0; i < demos.size(); ++i) {
    save_demo_file(demos[i],
                   (dir.path / (demos[i].demo_id + ".json")).string());
    manifest += (i ? "," : "") + std::string("\"") + demos[i].demo_id + "\"";
  }
  manifest += "]}";
  {
    std::ofstream out(dir.path / "manifest.json");
    out << manifest;
  }
  // Corrupt one demo so the filtering path is exercised.
  {
    DemoTrajectory broken = demos[0];
    const std::size_t t_ref = find_reference_timestep(broken, scene.delta_ref);
    for (std::size_t s = t_ref + 3; s < broken.length(); ++s) {
      broken.steps[s].object_pose.position.x += 0.8;
    }
    save_demo_file(broken, (dir.path / (broken.demo_id + ".json")).string());
  }

  const TaskSet set =
      build_task_set(dir.path.string(), scene, weights, 0.8, 5);
  std::size_t valid = 0, invalid = 0;
  for (const TaskSetEntry& e : set.entries) {
    if (e.valid) {
      ++valid;
    } else {
      ++invalid;
      CHECK_FALSE(e.invalid_reason.empty());
    }
  }
  CHECK(valid == 7);
  CHECK(invalid == 1);

  // One-hot ids are contiguous within each group.
  for (const TaskGroup& g : set.groups) {
    for (std::size_t i = 0; i < g.tasks.size(); ++i) {
      CHECK(g.tasks[i].one_hot_id == i);
    }
  }

  // Every surviving task passes replay validation (already enforced, spot
  // check the first group).
  REQUIRE_FALSE(set.groups.empty());
  for (const TaskSpec& t : set.groups[0].tasks) {
    CHECK(replay_validate(t, scene, weights).valid);
  }

  // Identical rerun produces an identical manifest.
  const TaskSet set2 =
      build_task_set(dir.path.string(), scene, weights, 0.8, 5);
  CHECK(serialize_task_manifest(set, "h") == serialize_task_manifest(set2, "h"));

  // Round trip through the manifest file.
  save_task_manifest(set, "confighash", (dir.path / "tasks.json").string());
  const TaskManifest loaded =
      load_task_manifest((dir.path / "tasks.json").string());
  CHECK(loaded.config_hash == "confighash");
  CHECK(loaded.entries.size() == set.entries.size());

  const auto group_ids = manifest_group_ids(loaded);
  REQUIRE_FALSE(group_ids.empty());
  const TaskGroup group =
      load_task_group(loaded, dir.path.string(), group_ids[0], scene);
  CHECK_FALSE(group.tasks.empty());
}
