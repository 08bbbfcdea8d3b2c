#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedcl/config.hpp"
#include "fedcl/metrics.hpp"

namespace fedcl {

struct RunReport {
  std::string strategy;
  std::uint64_t seed = 0;
  nlohmann::json config_echo;
  AccuracyMatrix acc;
  CommLedger ledger;
  IntegratorStats integrator;
  double bandwidth_bytes_per_sec = 0.0;
  double mean_jaccard = 1.0;
  bool leak_free = true;
  std::vector<std::string> warnings;

  // Wall-clock fields, excluded from the deterministic serialization.
  std::uint64_t started_unix = 0;
  double wall_seconds = 0.0;

  /// Full structured report; derived aggregates are recomputed from the raw
  /// records here, so serialization doubles as the self-consistency path.
  nlohmann::json to_json(bool include_wallclock) const;
};

/// Builds streams and allocations, runs the configured strategy over every
/// task, and fills the report. Deterministic per config (wall-clock aside).
RunReport run_experiment(const ExperimentConfig& cfg);

/// Continues a checkpointed run: completed tasks are skipped and the
/// partial report is restored, so the final report matches an uninterrupted
/// run byte for byte.
RunReport resume_experiment(const ExperimentConfig& cfg,
                            const std::string& checkpoint_path);

/// Stream + allocation specs for reproducibility audits.
nlohmann::json manifest_json(const ExperimentConfig& cfg);

struct CompareRow {
  std::string strategy;
  std::uint64_t seed = 0;
  int task_idx = -1;
  double avg_acc = 0.0;
  double mean_forgetting = 0.0;
  std::uint64_t bytes_total = 0;
  double sim_comm_seconds = 0.0;
  bool failed = false;
  std::string error;
};

/// Runs each config in input order; a failed run contributes a single
/// marker row (task_idx -1, nan metrics) and the rest proceed.
std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& cfgs);

/// Fixed schema:
/// strategy,seed,task_idx,avg_acc,mean_forgetting,bytes_total,sim_comm_seconds
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace fedcl
