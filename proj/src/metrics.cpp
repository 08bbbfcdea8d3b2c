#include "fedcl/metrics.hpp"

#include <algorithm>
#include <map>

#include "fedcl/errors.hpp"

namespace fedcl {

std::optional<double> forgetting_rate(const AccuracyMatrix& acc, int k, int m) {
  if (k > m || m >= acc.tasks_done()) {
    throw DimensionError("forgetting_rate: need k <= m within the matrix");
  }
  const double base = acc.at(k, k);
  if (base <= 0.0) return std::nullopt;
  const double rate = (base - acc.at(m, k)) / base;
  return std::clamp(rate, 0.0, 1.0);
}

double avg_accuracy(const AccuracyMatrix& acc, int m) {
  if (m >= acc.tasks_done()) {
    throw DimensionError("avg_accuracy: row not filled yet");
  }
  double total = 0.0;
  for (int i = 0; i <= m; ++i) total += acc.at(m, i);
  return total / (m + 1);
}

double mean_forgetting(const AccuracyMatrix& acc, int m) {
  double total = 0.0;
  int counted = 0;
  for (int k = 0; k < m; ++k) {
    if (const auto rate = forgetting_rate(acc, k, m)) {
      total += *rate;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : total / counted;
}

std::uint64_t CommLedger::bytes_up_total() const {
  std::uint64_t total = 0;
  for (const auto& r : records) total += r.bytes_up;
  return total;
}

std::uint64_t CommLedger::bytes_down_total() const {
  std::uint64_t total = 0;
  for (const auto& r : records) total += r.bytes_down;
  return total;
}

std::uint64_t CommLedger::bytes_total() const {
  return bytes_up_total() + bytes_down_total();
}

double comm_time(const CommLedger& ledger, double bandwidth_bytes_per_sec) {
  if (!(bandwidth_bytes_per_sec > 0.0)) {
    throw ConfigError("comm_time: bandwidth must be positive");
  }
  return static_cast<double>(ledger.bytes_total()) / bandwidth_bytes_per_sec;
}

double sync_round_seconds(const CommLedger& ledger,
                          double bandwidth_bytes_per_sec) {
  if (!(bandwidth_bytes_per_sec > 0.0)) {
    throw ConfigError("sync_round_seconds: bandwidth must be positive");
  }
  std::map<int, std::uint64_t> slowest;
  for (const auto& r : ledger.records) {
    slowest[r.round] = std::max(slowest[r.round], r.bytes_up + r.bytes_down);
  }
  double total = 0.0;
  for (const auto& [round, bytes] : slowest) {
    (void)round;
    total += static_cast<double>(bytes) / bandwidth_bytes_per_sec;
  }
  return total;
}

}  // namespace fedcl
