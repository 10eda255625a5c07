#include "bidex/demo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bidex {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::runtime_error("demo parse error at " + field + ": " + what);
}

const json& get_field(const json& obj, const std::string& key,
                      const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where + "." + key, "missing field");
  return *it;
}

Vec3 parse_vec3(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 3) fail(where, "expected [x, y, z]");
  Vec3 v{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
  if (!v.finite()) fail(where, "non-finite component");
  return v;
}

Pose parse_pose7(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 7) {
    fail(where, "expected [px, py, pz, qw, qx, qy, qz]");
  }
  Pose p;
  p.position = Vec3{arr[0].get<double>(), arr[1].get<double>(),
                    arr[2].get<double>()};
  if (!p.position.finite()) fail(where, "non-finite position");
  try {
    p.orientation = UnitQuat(arr[3].get<double>(), arr[4].get<double>(),
                             arr[5].get<double>(), arr[6].get<double>());
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return p;
}

json pose7_json(const Pose& p) {
  return json::array({p.position.x, p.position.y, p.position.z,
                      p.orientation.w, p.orientation.x, p.orientation.y,
                      p.orientation.z});
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

std::vector<Vec3> parse_point_set(const json& arr, const std::string& where) {
  if (!arr.is_array()) fail(where, "expected point array");
  if (arr.size() != kDemoPointCount) {
    fail(where, "expected exactly " + std::to_string(kDemoPointCount) +
                    " points, got " + std::to_string(arr.size()));
  }
  std::vector<Vec3> pts;
  pts.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    pts.push_back(parse_vec3(arr[i], where + "[" + std::to_string(i) + "]"));
  }
  return pts;
}

PrimitiveShape parse_shape(const json& obj, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected shape object");
  PrimitiveShape s;
  try {
    s.kind = PrimitiveShape::parse_kind(
        get_field(obj, "kind", where).get<std::string>());
  } catch (const std::invalid_argument& e) {
    fail(where + ".kind", e.what());
  }
  switch (s.kind) {
    case PrimitiveShape::Kind::Box: {
      const json& sz = get_field(obj, "size", where);
      if (!sz.is_array() || sz.size() != 3) fail(where + ".size", "expected [sx, sy, sz]");
      s.size_x = sz[0].get<double>();
      s.size_y = sz[1].get<double>();
      s.size_z = sz[2].get<double>();
      break;
    }
    case PrimitiveShape::Kind::Cylinder:
      s.radius = get_field(obj, "radius", where).get<double>();
      s.size_z = get_field(obj, "height", where).get<double>();
      break;
    case PrimitiveShape::Kind::Shell:
    case PrimitiveShape::Kind::Disc:
      s.radius = get_field(obj, "radius", where).get<double>();
      break;
  }
  return s;
}

json shape_json(const PrimitiveShape& s) {
  json j;
  j["kind"] = s.kind_name();
  switch (s.kind) {
    case PrimitiveShape::Kind::Box:
      j["size"] = json::array({s.size_x, s.size_y, s.size_z});
      break;
    case PrimitiveShape::Kind::Cylinder:
      j["radius"] = s.radius;
      j["height"] = s.size_z;
      break;
    case PrimitiveShape::Kind::Shell:
    case PrimitiveShape::Kind::Disc:
      j["radius"] = s.radius;
      break;
  }
  return j;
}

double tool_object_distance(const DemoStep& s) {
  return distance(s.tool_pose.position, s.object_pose.position);
}

}  // namespace

DemoTrajectory parse_demo(const std::string& bytes) {
  json root = json::parse(bytes, nullptr, false);
  if (root.is_discarded()) fail("$", "invalid JSON");
  if (!root.is_object()) fail("$", "expected top-level object");

  DemoTrajectory t;
  t.demo_id = get_field(root, "demo_id", "$").get<std::string>();
  t.action_label = get_field(root, "action", "$").get<std::string>();
  if (t.action_label.empty()) fail("$.action", "must be nonempty");
  t.tool_name = get_field(root, "tool", "$").get<std::string>();
  t.object_name = get_field(root, "object", "$").get<std::string>();
  t.tool_shape = parse_shape(get_field(root, "tool_shape", "$"), "$.tool_shape");
  t.object_shape =
      parse_shape(get_field(root, "object_shape", "$"), "$.object_shape");
  t.tool_points =
      parse_point_set(get_field(root, "tool_points", "$"), "$.tool_points");
  t.object_points =
      parse_point_set(get_field(root, "object_points", "$"), "$.object_points");

  const json& steps = get_field(root, "steps", "$");
  if (!steps.is_array()) fail("$.steps", "expected array");
  if (steps.size() < 2) {
    fail("$.steps", "trajectory too short: need at least 2 steps, got " +
                        std::to_string(steps.size()));
  }
  t.steps.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string where = "steps[" + std::to_string(i) + "]";
    const json& s = steps[i];
    if (!s.is_object()) fail(where, "expected object");
    DemoStep step;
    step.tool_pose = parse_pose7(get_field(s, "tool_pose", where), where + ".tool_pose");
    step.object_pose =
        parse_pose7(get_field(s, "object_pose", where), where + ".object_pose");
    step.left_wrist =
        parse_pose7(get_field(s, "left_wrist", where), where + ".left_wrist");
    step.right_wrist =
        parse_pose7(get_field(s, "right_wrist", where), where + ".right_wrist");
    for (int side = 0; side < 2; ++side) {
      const char* key = side == 0 ? "left_fingertips" : "right_fingertips";
      const json& tips = get_field(s, key, where);
      if (!tips.is_array() || tips.size() != kFingersPerHand) {
        fail(where + "." + key,
             "expected " + std::to_string(kFingersPerHand) + " fingertips");
      }
      for (std::size_t f = 0; f < kFingersPerHand; ++f) {
        const Vec3 v = parse_vec3(
            tips[f], where + "." + key + "[" + std::to_string(f) + "]");
        (side == 0 ? step.left_fingertips : step.right_fingertips)[f] = v;
      }
    }
    t.steps.push_back(step);
  }
  return t;
}

std::string serialize_demo(const DemoTrajectory& t) {
  json root;
  root["demo_id"] = t.demo_id;
  root["action"] = t.action_label;
  root["tool"] = t.tool_name;
  root["object"] = t.object_name;
  root["tool_shape"] = shape_json(t.tool_shape);
  root["object_shape"] = shape_json(t.object_shape);
  json tool_pts = json::array();
  for (const Vec3& p : t.tool_points) tool_pts.push_back(vec3_json(p));
  root["tool_points"] = std::move(tool_pts);
  json obj_pts = json::array();
  for (const Vec3& p : t.object_points) obj_pts.push_back(vec3_json(p));
  root["object_points"] = std::move(obj_pts);
  json steps = json::array();
  for (const DemoStep& s : t.steps) {
    json step;
    step["tool_pose"] = pose7_json(s.tool_pose);
    step["object_pose"] = pose7_json(s.object_pose);
    step["left_wrist"] = pose7_json(s.left_wrist);
    step["right_wrist"] = pose7_json(s.right_wrist);
    json lf = json::array();
    for (const Vec3& v : s.left_fingertips) lf.push_back(vec3_json(v));
    step["left_fingertips"] = std::move(lf);
    json rf = json::array();
    for (const Vec3& v : s.right_fingertips) rf.push_back(vec3_json(v));
    step["right_fingertips"] = std::move(rf);
    steps.push_back(std::move(step));
  }
  root["steps"] = std::move(steps);
  return root.dump();
}

DemoTrajectory load_demo_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open demo file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_demo(buf.str());
}

void save_demo_file(const DemoTrajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write demo file: " + path);
  out << serialize_demo(traj);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::size_t find_reference_timestep(const DemoTrajectory& traj,
                                    double delta_ref) {
  for (std::size_t t = 0; t + 1 < traj.steps.size(); ++t) {
    const double d0 = tool_object_distance(traj.steps[t]);
    const double d1 = tool_object_distance(traj.steps[t + 1]);
    if (std::abs(d1 - d0) > delta_ref) return t;
  }
  return 0;
}

DemoTrajectory apply_z_offset(const DemoTrajectory& traj, double table_height,
                              double clearance) {
  double min_bottom = std::numeric_limits<double>::infinity();
  for (const DemoStep& s : traj.steps) {
    min_bottom = std::min(
        min_bottom, s.tool_pose.position.z - traj.tool_shape.bottom_offset());
    min_bottom =
        std::min(min_bottom,
                 s.object_pose.position.z - traj.object_shape.bottom_offset());
  }
  const double dz = table_height + clearance - min_bottom;
  DemoTrajectory out = traj;
  for (DemoStep& s : out.steps) {
    s.tool_pose.position.z += dz;
    s.object_pose.position.z += dz;
    s.left_wrist.position.z += dz;
    s.right_wrist.position.z += dz;
    for (Vec3& f : s.left_fingertips) f.z += dz;
    for (Vec3& f : s.right_fingertips) f.z += dz;
  }
  return out;
}

Vec3 compute_grasp_center(const std::vector<Vec3>& world_points,
                          const Vec3& wrist_anchor,
                          const std::vector<Vec3>& fingertip_anchors,
                          std::size_t L) {
  Vec3 anchor = wrist_anchor;
  for (const Vec3& f : fingertip_anchors) anchor += f;
  anchor = anchor * (1.0 / static_cast<double>(1 + fingertip_anchors.size()));
  const std::vector<std::size_t> idx = nearest_neighbors(world_points, anchor, L);
  Vec3 gc;
  for (std::size_t i : idx) gc += world_points[i];
  return gc * (1.0 / static_cast<double>(L));
}

std::string demo_group_id(const DemoTrajectory& demo) {
  return demo.action_label + "_" + demo.tool_shape.kind_name() + "_" +
         demo.object_shape.kind_name();
}

TaskSplit split_tasks(const std::vector<DemoTrajectory>& demos,
                      double train_fraction, RngStream& rng) {
  if (demos.size() < 2) {
    throw std::invalid_argument("split_tasks: need at least 2 demos");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_tasks: train_fraction must be in (0, 1)");
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    groups[demo_group_id(demos[i])].push_back(i);
  }

  TaskSplit split;
  std::vector<std::size_t> held_out;
  for (auto& [gid, members] : groups) {
    std::vector<std::size_t> order(members.size());
    shuffled_indices(members.size(), rng, order.data());
    const std::size_t n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(
               train_fraction * static_cast<double>(members.size()))));
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t di = members[order[k]];
      if (k < n_train) {
        split.train.push_back(demos[di].demo_id);
      } else {
        held_out.push_back(di);
      }
    }
  }

  std::set<std::string> train_tools, train_objects;
  std::set<std::string> train_ids(split.train.begin(), split.train.end());
  for (const DemoTrajectory& d : demos) {
    if (train_ids.count(d.demo_id)) {
      train_tools.insert(d.tool_name);
      train_objects.insert(d.object_name);
    }
  }
  for (std::size_t di : held_out) {
    const DemoTrajectory& d = demos[di];
    if (train_tools.count(d.tool_name) && train_objects.count(d.object_name)) {
      split.test_comb.push_back(d.demo_id);
    } else {
      split.test_new.push_back(d.demo_id);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test_comb.begin(), split.test_comb.end());
  std::sort(split.test_new.begin(), split.test_new.end());
  return split;
}

}  // namespace bidex
