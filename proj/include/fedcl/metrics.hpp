#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace fedcl {

/// Lower-triangular accuracy history: acc(j, i) is the accuracy of task i
/// measured after finishing task j (i <= j), averaged over clients.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  int tasks_done() const { return static_cast<int>(rows.size()); }
  double at(int j, int i) const { return rows[j][i]; }
};

/// (acc[k][k] - acc[m][k]) / acc[k][k], clamped to [0, 1]; empty when the
/// base accuracy is zero (undefined, reported as missing).
std::optional<double> forgetting_rate(const AccuracyMatrix& acc, int k, int m);

/// Mean of acc[m][0..m].
double avg_accuracy(const AccuracyMatrix& acc, int m);

/// Mean forgetting over previously learned tasks k < m; 0 when none are
/// defined.
double mean_forgetting(const AccuracyMatrix& acc, int m);

struct CommRecord {
  int round = 0;
  int client_id = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

struct CommLedger {
  std::vector<CommRecord> records;

  std::uint64_t bytes_up_total() const;
  std::uint64_t bytes_down_total() const;
  std::uint64_t bytes_total() const;
};

/// Total bytes over one link of the given bandwidth, in seconds.
double comm_time(const CommLedger& ledger, double bandwidth_bytes_per_sec);

/// Synchronous-round model: each round costs the slowest client's transfer
/// (up + down serialized on its own link); rounds are summed.
double sync_round_seconds(const CommLedger& ledger, double bandwidth_bytes_per_sec);

struct IntegratorStats {
  std::uint64_t local_projections = 0;
  std::uint64_t finetune_projections = 0;
  std::uint64_t qp_nonconverged = 0;
  std::uint64_t bound_flags = 0;
  std::uint64_t max_qp_iterations = 0;
  double max_g_prime_norm_sq = 0.0;
};

}  // namespace fedcl
