#include "bidex/evalharness.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bidex {

using nlohmann::json;

namespace {

bool step_within(const EpisodeStepRecord& s, const Vec3& tool_ref,
                 const Vec3& obj_ref, double eps) {
  return distance(s.tool_pose.position, tool_ref) <= eps &&
         distance(s.object_pose.position, obj_ref) <= eps;
}

}  // namespace

double eval_r1(const std::vector<EpisodeLog>& logs, double eps_succ,
               std::size_t u) {
  if (logs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const EpisodeLog& log : logs) {
    std::size_t run = 0;
    bool ok = false;
    for (const EpisodeStepRecord& s : log.steps) {
      run = step_within(s, log.tool_reference_position,
                        log.object_reference_position, eps_succ)
                ? run + 1
                : 0;
      if (run >= u) {
        ok = true;
        break;
      }
    }
    if (ok) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logs.size());
}

double eval_r2(const std::vector<EpisodeLog>& logs, double eps_track,
               std::size_t f) {
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const EpisodeLog& log : logs) {
    const std::size_t L = log.tool_track_positions.size();
    total += L;
    const std::int64_t start = log.tracking_start();
    if (start < 0) continue;
    for (std::size_t i = 0; i < L; ++i) {
      // First simulation step mapped to demo index i.
      const std::size_t t_since = i == 0 ? 0 : f * (i - 1) + 1;
      const std::size_t t = static_cast<std::size_t>(start) + t_since;
      if (t >= log.steps.size()) break;
      const EpisodeStepRecord& s = log.steps[t];
      if (distance(s.tool_pose.position, log.tool_track_positions[i]) <=
              eps_track &&
          distance(s.object_pose.position, log.object_track_positions[i]) <=
              eps_track) {
        ++hits;
      }
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<SweepRow> sweep_thresholds(const std::vector<EpisodeLog>& logs,
                                       const std::vector<double>& thresholds,
                                       std::size_t u, std::size_t f) {
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (thresholds[i] <= thresholds[i - 1]) {
      throw std::invalid_argument("sweep thresholds must be ascending");
    }
  }
  std::vector<SweepRow> rows;
  for (double eps : thresholds) {
    SweepRow row;
    row.threshold = eps;
    row.r1 = eval_r1(logs, eps, u);
    row.r2 = eval_r2(logs, eps, f);
    rows.push_back(row);
  }
  return rows;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "split,task_id,threshold,r1,r2,n\n";
  for (const EvalRow& r : report.rows) {
    out << r.split << ',' << r.task_id << ',' << json(r.threshold).dump()
        << ',' << json(r.r1).dump() << ',' << json(r.r2).dump() << ',' << r.n
        << "\n";
  }
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["policy_id"] = report.policy_id;
  j["config_hash"] = report.config_hash;
  json rows = json::array();
  for (const EvalRow& r : report.rows) {
    rows.push_back(json{{"split", r.split},
                        {"task_id", r.task_id},
                        {"threshold", r.threshold},
                        {"r1", r.r1},
                        {"r2", r.r2},
                        {"n", r.n}});
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport report;
  report.policy_id = j.value("policy_id", "");
  report.config_hash = j.value("config_hash", "");
  for (const json& r : j.at("rows")) {
    EvalRow row;
    row.split = r.at("split").get<std::string>();
    row.task_id = r.at("task_id").get<std::string>();
    row.threshold = r.at("threshold").get<double>();
    row.r1 = r.at("r1").get<double>();
    row.r2 = r.at("r2").get<double>();
    row.n = r.at("n").get<std::size_t>();
    report.rows.push_back(row);
  }
  return report;
}

void save_report(const EvalReport& report, const std::string& csv_path,
                 const std::string& json_path) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + csv_path);
    out << report_to_csv(report);
  }
  {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + json_path);
    out << report_to_json(report) << "\n";
  }
}

}  // namespace bidex
