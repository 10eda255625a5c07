#pragma once

#include <string>
#include <vector>

#include "bidex/episode.hpp"

namespace bidex {

struct EvalConfig {
  std::size_t n_episodes = 32;
  double eps_succ = 0.1;
  double eps_track = 0.1;
  std::size_t u_consecutive = 10;
  std::size_t f = 5;
  std::vector<double> thresholds = {0.05, 0.075, 0.1};
};

/// Fraction of episodes containing u consecutive steps with both the tool and
/// the object within eps_succ of their reference positions.
double eval_r1(const std::vector<EpisodeLog>& logs, double eps_succ,
               std::size_t u);

/// Fraction of demo tracking indices hit within eps_track, scanning the first
/// simulation step mapped to each index. Episodes that never reach the
/// tracking stage contribute zero across all their indices.
double eval_r2(const std::vector<EpisodeLog>& logs, double eps_track,
               std::size_t f);

struct SweepRow {
  double threshold = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
};

/// Recomputes both metrics per threshold from the same logs; no re-rollout.
std::vector<SweepRow> sweep_thresholds(const std::vector<EpisodeLog>& logs,
                                       const std::vector<double>& thresholds,
                                       std::size_t u, std::size_t f);

struct EvalRow {
  std::string split;
  std::string task_id;  // "ALL" aggregates a split
  double threshold = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  std::string policy_id;
  std::string config_hash;
  std::vector<EvalRow> rows;
};

/// Stable column order: split, task_id, threshold, r1, r2, n.
std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void save_report(const EvalReport& report, const std::string& csv_path,
                 const std::string& json_path);

}  // namespace bidex
