#include "bidex/episode.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bidex {

using nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) {
  return Vec3{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json pose_json(const Pose& p) {
  return json::array({p.position.x, p.position.y, p.position.z,
                      p.orientation.w, p.orientation.x, p.orientation.y,
                      p.orientation.z});
}

Pose pose_from(const json& j) {
  Pose p;
  p.position = Vec3{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
  p.orientation = UnitQuat(j.at(3).get<double>(), j.at(4).get<double>(),
                           j.at(5).get<double>(), j.at(6).get<double>());
  return p;
}

json breakdown_json(const RewardBreakdown& r) {
  return json{{"appro", r.appro}, {"lift", r.lift},   {"bonus", r.bonus},
              {"align", r.align}, {"track", r.track}, {"total", r.total}};
}

RewardBreakdown breakdown_from(const json& j) {
  RewardBreakdown r;
  r.appro = j.at("appro").get<double>();
  r.lift = j.at("lift").get<double>();
  r.bonus = j.at("bonus").get<double>();
  r.align = j.at("align").get<double>();
  r.track = j.at("track").get<double>();
  r.total = j.at("total").get<double>();
  return r;
}

}  // namespace

std::int64_t EpisodeLog::tracking_start() const {
  for (const EpisodeStepRecord& s : steps) {
    if (s.stage == Stage::Tracking) return static_cast<std::int64_t>(s.t);
  }
  return -1;
}

std::string episode_log_to_jsonl(const EpisodeLog& log) {
  std::ostringstream out;
  json header;
  header["type"] = "header";
  header["task_id"] = log.task_id;
  header["tool_reference"] = vec3_json(log.tool_reference_position);
  header["object_reference"] = vec3_json(log.object_reference_position);
  json tt = json::array();
  for (const Vec3& v : log.tool_track_positions) tt.push_back(vec3_json(v));
  header["tool_track"] = std::move(tt);
  json ot = json::array();
  for (const Vec3& v : log.object_track_positions) ot.push_back(vec3_json(v));
  header["object_track"] = std::move(ot);
  out << header.dump() << "\n";

  for (const EpisodeStepRecord& s : log.steps) {
    json rec;
    rec["t"] = s.t;
    rec["stage"] = s.stage == Stage::Tracking ? "tracking" : "aligning";
    rec["tool_pose"] = pose_json(s.tool_pose);
    rec["object_pose"] = pose_json(s.object_pose);
    rec["left_wrist"] = pose_json(s.left_wrist);
    rec["right_wrist"] = pose_json(s.right_wrist);
    rec["reward_left"] = breakdown_json(s.reward_left);
    rec["reward_right"] = breakdown_json(s.reward_right);
    rec["tool_attached"] = s.tool_attached;
    rec["object_attached"] = s.object_attached;
    out << rec.dump() << "\n";
  }
  return out.str();
}

EpisodeLog episode_log_from_jsonl(const std::string& text) {
  EpisodeLog log;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.value("type", "") == "header") {
      log.task_id = j.at("task_id").get<std::string>();
      log.tool_reference_position = vec3_from(j.at("tool_reference"));
      log.object_reference_position = vec3_from(j.at("object_reference"));
      for (const json& v : j.at("tool_track")) {
        log.tool_track_positions.push_back(vec3_from(v));
      }
      for (const json& v : j.at("object_track")) {
        log.object_track_positions.push_back(vec3_from(v));
      }
      have_header = true;
      continue;
    }
    EpisodeStepRecord s;
    s.t = j.at("t").get<std::size_t>();
    s.stage = j.at("stage").get<std::string>() == "tracking" ? Stage::Tracking
                                                             : Stage::Aligning;
    s.tool_pose = pose_from(j.at("tool_pose"));
    s.object_pose = pose_from(j.at("object_pose"));
    s.left_wrist = pose_from(j.at("left_wrist"));
    s.right_wrist = pose_from(j.at("right_wrist"));
    s.reward_left = breakdown_from(j.at("reward_left"));
    s.reward_right = breakdown_from(j.at("reward_right"));
    s.tool_attached = j.at("tool_attached").get<bool>();
    s.object_attached = j.at("object_attached").get<bool>();
    log.steps.push_back(s);
  }
  if (!have_header) {
    throw std::runtime_error("episode log missing header record");
  }
  return log;
}

void save_episode_log(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write episode log: " + path);
  out << episode_log_to_jsonl(log);
  if (!out) throw std::runtime_error("write failed: " + path);
}

EpisodeLog load_episode_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open episode log: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return episode_log_from_jsonl(buf.str());
}

}  // namespace bidex
