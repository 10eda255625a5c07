#include "bidex/task.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bidex/env.hpp"
#include "bidex/hash.hpp"

namespace bidex {

using nlohmann::json;

namespace {

/// Yaw-only projection: the rotation about +z that best matches where the
/// orientation sends the +x axis. Keeps on-table starts flat.
UnitQuat project_to_yaw(const UnitQuat& q) {
  const Vec3 xw = q.rotate(Vec3{1.0, 0.0, 0.0});
  const double len = std::hypot(xw.x, xw.y);
  if (len < 1e-9) return UnitQuat::identity();
  const double yaw = std::atan2(xw.y, xw.x);
  return UnitQuat::from_axis_angle(Vec3{0.0, 0.0, 1.0}, yaw);
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

json pose_json(const Pose& p) {
  return json::array({p.position.x, p.position.y, p.position.z,
                      p.orientation.w, p.orientation.x, p.orientation.y,
                      p.orientation.z});
}

std::string serialize_task_content(const TaskSpec& t) {
  json j;
  j["demo_id"] = t.demo_id;
  j["group_id"] = t.group_id;
  j["reference_index"] = t.reference_index;
  j["tool_reference"] = pose_json(t.tool_reference_pose);
  j["object_reference"] = pose_json(t.object_reference_pose);
  j["grasp_center_tool"] = vec3_json(t.grasp_center_tool);
  j["grasp_center_object"] = vec3_json(t.grasp_center_object);
  j["initial_tool"] = pose_json(t.initial_tool_pose);
  j["initial_object"] = pose_json(t.initial_object_pose);
  json tt = json::array();
  for (const Pose& p : t.tool_track) tt.push_back(pose_json(p));
  j["tool_track"] = std::move(tt);
  json ot = json::array();
  for (const Pose& p : t.object_track) ot.push_back(pose_json(p));
  j["object_track"] = std::move(ot);
  return j.dump();
}

}  // namespace

TaskSpec build_task(const DemoTrajectory& demo, const SceneConfig& scene) {
  TaskSpec task;
  task.task_id = "task_" + demo.demo_id;
  task.demo_id = demo.demo_id;
  task.group_id = demo_group_id(demo);
  task.reference_index = find_reference_timestep(demo, scene.delta_ref);
  if (task.reference_index + 1 >= demo.length()) {
    throw std::runtime_error("degenerate task: no tracking steps after the reference timestep in demo " +
                             demo.demo_id);
  }

  const DemoStep& ref = demo.steps[task.reference_index];
  task.tool_reference_pose = ref.tool_pose;
  task.object_reference_pose = ref.object_pose;
  for (std::size_t t = task.reference_index; t < demo.length(); ++t) {
    task.tool_track.push_back(demo.steps[t].tool_pose);
    task.object_track.push_back(demo.steps[t].object_pose);
  }

  // Grasp centers: canonical clouds posed at the reference step, anchored at
  // the demonstrated wrist and fingertips.
  std::vector<Vec3> tool_world(demo.tool_points.size());
  for (std::size_t i = 0; i < demo.tool_points.size(); ++i) {
    tool_world[i] = transform_point(ref.tool_pose, demo.tool_points[i]);
  }
  std::vector<Vec3> object_world(demo.object_points.size());
  for (std::size_t i = 0; i < demo.object_points.size(); ++i) {
    object_world[i] = transform_point(ref.object_pose, demo.object_points[i]);
  }
  const std::vector<Vec3> right_tips(ref.right_fingertips.begin(),
                                     ref.right_fingertips.end());
  const std::vector<Vec3> left_tips(ref.left_fingertips.begin(),
                                    ref.left_fingertips.end());
  task.grasp_center_tool =
      compute_grasp_center(tool_world, ref.right_wrist.position, right_tips,
                           scene.grasp_center_points);
  task.grasp_center_object =
      compute_grasp_center(object_world, ref.left_wrist.position, left_tips,
                           scene.grasp_center_points);
  task.tool_grasp_local =
      transform_point(ref.tool_pose.inverse(), task.grasp_center_tool);
  task.object_grasp_local =
      transform_point(ref.object_pose.inverse(), task.grasp_center_object);

  task.initial_tool_pose.orientation =
      project_to_yaw(demo.steps[0].tool_pose.orientation);
  task.initial_tool_pose.position =
      scene.object_home_position(Side::Right, demo.tool_shape.bottom_offset());
  task.initial_object_pose.orientation =
      project_to_yaw(demo.steps[0].object_pose.orientation);
  task.initial_object_pose.position =
      scene.object_home_position(Side::Left, demo.object_shape.bottom_offset());

  task.tool_shape = demo.tool_shape;
  task.object_shape = demo.object_shape;
  task.tool_points = demo.tool_points;
  task.object_points = demo.object_points;
  task.demo_steps = demo.steps;
  return task;
}

ReplayReport replay_validate(const TaskSpec& task, const SceneConfig& scene,
                             const RewardWeights& weights) {
  ReplayReport report;
  BimanualEnv env(task, scene, weights, std::max<std::size_t>(1, task.one_hot_id + 1));
  // The replay exercises the demonstration's own trajectory, so the objects
  // start where the demonstration starts.
  env.scripted_place_objects(task.demo_steps[0].tool_pose,
                             task.demo_steps[0].object_pose);

  for (std::size_t t = 0; t < task.demo_steps.size(); ++t) {
    const DemoStep& step = task.demo_steps[t];
    const double closure = t >= task.reference_index ? 1.0 : 0.0;
    env.scripted_place_hand(Side::Left, step.left_wrist, closure);
    env.scripted_place_hand(Side::Right, step.right_wrist, closure);

    const EnvState& s = env.state();
    if (t == task.reference_index) {
      const bool attached = s.tool.attachment != Attachment::None &&
                            s.object.attachment != Attachment::None;
      if (!attached) {
        report.reason = "grasp did not engage at the reference step";
        report.first_failing_step = t;
        report.failure_distance = std::max(
            distance(s.hand(Side::Right).wrist_pose.position,
                     task.grasp_center_tool),
            distance(s.hand(Side::Left).wrist_pose.position,
                     task.grasp_center_object));
        return report;
      }
    }
    const double d_tool = distance(s.tool.pose.position, step.tool_pose.position);
    const double d_obj =
        distance(s.object.pose.position, step.object_pose.position);
    if (d_tool > weights.eps_succ || d_obj > weights.eps_succ) {
      report.reason = "tracked object left the demonstration corridor";
      report.first_failing_step = t;
      report.failure_distance = std::max(d_tool, d_obj);
      return report;
    }
  }
  report.valid = true;
  return report;
}

TaskSet build_task_set(const std::string& dataset_dir, const SceneConfig& scene,
                       const RewardWeights& weights, double train_fraction,
                       std::uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path dir(dataset_dir);
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("dataset manifest not found: " +
                             manifest_path.string());
  }
  json manifest = json::parse(in);
  std::vector<std::string> demo_ids =
      manifest.at("demos").get<std::vector<std::string>>();
  std::sort(demo_ids.begin(), demo_ids.end());

  TaskSet set;
  std::vector<DemoTrajectory> valid_demos;
  std::map<std::string, std::vector<TaskSpec>> by_group;

  for (const std::string& id : demo_ids) {
    const std::string file = (dir / (id + ".json")).string();
    TaskSetEntry entry;
    entry.demo_file = id + ".json";
    entry.task_id = "task_" + id;
    try {
      DemoTrajectory demo = load_demo_file(file);
      demo = apply_z_offset(demo, scene.table_height, scene.table_clearance);
      TaskSpec task = build_task(demo, scene);
      entry.group_id = task.group_id;
      const ReplayReport replay = replay_validate(task, scene, weights);
      if (!replay.valid) {
        entry.valid = false;
        entry.invalid_reason = replay.reason + " (step " +
                               std::to_string(replay.first_failing_step) + ")";
        entry.content_hash = sha256_hex(serialize_demo(demo));
      } else {
        entry.valid = true;
        entry.content_hash = sha256_hex(serialize_task_content(task));
        by_group[task.group_id].push_back(std::move(task));
        valid_demos.push_back(std::move(demo));
      }
    } catch (const std::exception& e) {
      entry.valid = false;
      entry.invalid_reason = e.what();
    }
    set.entries.push_back(std::move(entry));
  }

  if (valid_demos.empty()) {
    throw std::runtime_error("no valid task could be constructed from " +
                             dataset_dir);
  }

  if (valid_demos.size() >= 2) {
    RngStream rng(seed, 0x5371ull);
    set.split = split_tasks(valid_demos, train_fraction, rng);
  } else {
    set.split.train.push_back(valid_demos[0].demo_id);
  }

  for (auto& [gid, tasks] : by_group) {
    std::sort(tasks.begin(), tasks.end(),
              [](const TaskSpec& a, const TaskSpec& b) {
                return a.demo_id < b.demo_id;
              });
    for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].one_hot_id = i;
    TaskGroup group;
    group.group_id = gid;
    group.tasks = std::move(tasks);
    set.groups.push_back(std::move(group));
  }

  auto split_of = [&](const std::string& demo_id) -> std::string {
    auto has = [&](const std::vector<std::string>& v) {
      return std::find(v.begin(), v.end(), demo_id) != v.end();
    };
    if (has(set.split.train)) return "train";
    if (has(set.split.test_comb)) return "test_comb";
    if (has(set.split.test_new)) return "test_new";
    return "";
  };
  for (TaskSetEntry& e : set.entries) {
    if (e.valid) {
      const std::string demo_id = e.task_id.substr(5);
      e.split_label = split_of(demo_id);
    }
  }
  return set;
}

std::string serialize_task_manifest(const TaskSet& set,
                                    const std::string& config_hash) {
  json j;
  j["config_hash"] = config_hash;
  json tasks = json::array();
  for (const TaskSetEntry& e : set.entries) {
    json t;
    t["task_id"] = e.task_id;
    t["demo_file"] = e.demo_file;
    t["group_id"] = e.group_id;
    t["split"] = e.split_label;
    t["valid"] = e.valid;
    t["content_hash"] = e.content_hash;
    t["reason"] = e.invalid_reason;
    tasks.push_back(std::move(t));
  }
  j["tasks"] = std::move(tasks);
  return j.dump(2);
}

void save_task_manifest(const TaskSet& set, const std::string& config_hash,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write task manifest: " + path);
  out << serialize_task_manifest(set, config_hash) << "\n";
}

TaskManifest load_task_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open task manifest: " + path);
  json j = json::parse(in);
  TaskManifest m;
  m.config_hash = j.value("config_hash", "");
  for (const json& t : j.at("tasks")) {
    TaskSetEntry e;
    e.task_id = t.at("task_id").get<std::string>();
    e.demo_file = t.at("demo_file").get<std::string>();
    e.group_id = t.value("group_id", "");
    e.split_label = t.value("split", "");
    e.valid = t.at("valid").get<bool>();
    e.content_hash = t.value("content_hash", "");
    e.invalid_reason = t.value("reason", "");
    m.entries.push_back(std::move(e));
  }
  return m;
}

TaskGroup load_task_group(const TaskManifest& manifest,
                          const std::string& dataset_dir,
                          const std::string& group_id,
                          const SceneConfig& scene) {
  namespace fs = std::filesystem;
  TaskGroup group;
  group.group_id = group_id;
  std::vector<const TaskSetEntry*> members;
  for (const TaskSetEntry& e : manifest.entries) {
    if (e.valid && e.group_id == group_id) members.push_back(&e);
  }
  if (members.empty()) {
    throw std::runtime_error("no valid tasks in group: " + group_id);
  }
  std::sort(members.begin(), members.end(),
            [](const TaskSetEntry* a, const TaskSetEntry* b) {
              return a->task_id < b->task_id;
            });
  for (std::size_t i = 0; i < members.size(); ++i) {
    DemoTrajectory demo =
        load_demo_file((fs::path(dataset_dir) / members[i]->demo_file).string());
    demo = apply_z_offset(demo, scene.table_height, scene.table_clearance);
    TaskSpec task = build_task(demo, scene);
    task.one_hot_id = i;
    group.tasks.push_back(std::move(task));
  }
  return group;
}

std::vector<std::string> manifest_group_ids(const TaskManifest& manifest) {
  std::vector<std::string> ids;
  for (const TaskSetEntry& e : manifest.entries) {
    if (e.valid && std::find(ids.begin(), ids.end(), e.group_id) == ids.end()) {
      ids.push_back(e.group_id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace bidex
