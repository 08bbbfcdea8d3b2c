#include "fedcl/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "fedcl/federation.hpp"
#include "fedcl/integrator.hpp"
#include "fedcl/knowledge.hpp"
#include "fedcl/mlp.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

namespace {

ParamVector random_vector(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// ---- reference routines (independent of the implementations under test) --

std::optional<std::vector<double>> ref_solve_linear(
    std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    if (std::fabs(a[pivot][col]) < 1e-12) return std::nullopt;
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

// Best feasible candidate over all active sets of the projection QP.
std::optional<std::vector<double>> ref_enumerate_v(
    const std::vector<ParamVector>& rows, const ParamVector& g) {
  const std::size_t k = rows.size();
  std::optional<std::vector<double>> best;
  double best_obj = 0.0;

  for (std::size_t mask = 0; mask < (1ull << k); ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t j = 0; j < k; ++j) {
      if (mask & (1ull << j)) subset.push_back(j);
    }
    std::vector<double> v(k, 0.0);
    if (!subset.empty()) {
      std::vector<std::vector<double>> a(subset.size(),
                                         std::vector<double>(subset.size()));
      std::vector<double> b(subset.size());
      for (std::size_t p = 0; p < subset.size(); ++p) {
        for (std::size_t q = 0; q < subset.size(); ++q) {
          a[p][q] = dot(rows[subset[p]], rows[subset[q]]);
        }
        b[p] = -dot(rows[subset[p]], g);
      }
      const auto solved = ref_solve_linear(a, b);
      if (!solved) continue;
      for (std::size_t p = 0; p < subset.size(); ++p) v[subset[p]] = (*solved)[p];
    }

    ParamVector candidate = g;
    for (std::size_t j = 0; j < k; ++j) {
      if (v[j] != 0.0) {
        for (std::size_t i = 0; i < candidate.size(); ++i) {
          candidate[i] += v[j] * rows[j][i];
        }
      }
    }
    bool feasible = true;
    for (const auto& row : rows) {
      if (dot(row, candidate) < -1e-9) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;

    double obj = 0.0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      obj += 0.5 * (candidate[i] - g[i]) * (candidate[i] - g[i]);
    }
    if (!best || obj < best_obj) {
      best = v;
      best_obj = obj;
    }
  }
  return best;
}

std::vector<std::size_t> ref_topk(const ParamVector& values, std::size_t count) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(values[a]);
    const double mb = std::fabs(values[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

// ---- individual checks ---------------------------------------------------

CheckResult check_gradients() {
  CheckResult result{"gradient_finite_difference", true, ""};
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const MlpShape shape{{4, 5, 3},
                         trial % 2 ? Activation::Tanh : Activation::Relu};
    Rng init(stream_key(1000 + trial, 0, 0, Stream::ParamInit));
    const ParamVector params = init_params(shape, init);

    Rng rng(2000 + trial);
    Batch batch;
    batch.inputs = Matrix(5, 4);
    for (double& x : batch.inputs.data) x = rng.normal();
    batch.labels.resize(5);
    for (int& y : batch.labels) y = static_cast<int>(rng.below(3));

    const ParamVector analytic = grad_hard(shape, params, batch);
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double h = 1e-5;
      const double saved = probe[i];
      probe[i] = saved + h;
      const double up = loss_hard(shape, probe, batch);
      probe[i] = saved - h;
      const double down = loss_hard(shape, probe, batch);
      probe[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max(std::fabs(analytic[i]), 1e-8);
      worst = std::max(worst, std::fabs(analytic[i] - fd) / denom);
    }
  }
  result.pass = worst <= 1e-4;
  result.detail = "max relative error " + std::to_string(worst);
  return result;
}

CheckResult check_qp() {
  CheckResult result{"qp_enumeration_oracle", true, ""};
  Rng rng(515);
  double worst_gap = 0.0;
  double worst_feas = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const int n = 2 + static_cast<int>(rng.below(11));
    const ParamVector g = random_vector(rng, n);
    ConstraintSet set;
    for (int j = 0; j < k; ++j) {
      set.rows.push_back(random_vector(rng, n));
      set.labels.push_back("check");
    }

    const QpSolution solution = solve_dual(set, g);
    if (!solution.converged) {
      result.pass = false;
      result.detail = "solver did not converge";
      return result;
    }
    const auto oracle_v = ref_enumerate_v(set.rows, g);
    if (!oracle_v) {
      result.pass = false;
      result.detail = "oracle found no feasible candidate";
      return result;
    }
    worst_gap = std::max(worst_gap,
                         std::fabs(dual_objective(set, g, solution.v) -
                                   dual_objective(set, g, *oracle_v)));

    const ParamVector g_prime = integrate(set, g);
    for (const auto& row : set.rows) {
      worst_feas = std::min(worst_feas, dot(row, g_prime));
    }
  }
  result.pass = worst_gap <= 1e-8 && worst_feas >= -1e-6;
  result.detail = "max objective gap " + std::to_string(worst_gap) +
                  ", min constraint inner " + std::to_string(worst_feas);
  return result;
}

CheckResult check_extraction() {
  CheckResult result{"extraction_full_sort", true, ""};
  Rng rng(616);
  for (int trial = 0; trial < 10 && result.pass; ++trial) {
    const ParamVector values = random_vector(rng, 500);
    for (double rho : {0.05, 0.1, 0.2}) {
      const auto knowledge = extract_knowledge(0, rho, values);
      const auto expected = ref_topk(values, knowledge.entries.size());
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (knowledge.entries[i].first != expected[i]) {
          result.pass = false;
          result.detail = "retained set diverged from the full sort";
          break;
        }
      }
      if (!result.pass) break;
    }
  }
  if (result.pass) result.detail = "exact match on 10 vectors x 3 ratios";
  return result;
}

CheckResult check_schedule() {
  CheckResult result{"learning_rate_bounds", true, ""};
  const ScheduleConfig cfg = make_schedule(0.001, 0.5, 1.0, 8.0, 10);
  for (int r = 1; r <= 1000000; ++r) {
    if (eta_global(cfg, r) * cfg.mu * (cfg.gamma + r) > 2.0) {
      result.pass = false;
      result.detail = "global bound violated at r=" + std::to_string(r);
      return result;
    }
  }
  if (eta_local(cfg, 4) / eta_local(cfg, 1) != 0.5) {
    result.pass = false;
    result.detail = "local decay is not exactly 1/2 at r=4";
    return result;
  }
  result.detail = "bound holds for r=1..1e6; local decay exact";
  return result;
}

CheckResult check_distance() {
  CheckResult result{"wasserstein_properties", true, ""};
  Rng rng(717);
  for (int trial = 0; trial < 20 && result.pass; ++trial) {
    const ParamVector a = random_vector(rng, 16);
    const ParamVector b = random_vector(rng, 16);
    const ParamVector c = random_vector(rng, 16);
    if (wasserstein1d(a, b) != wasserstein1d(b, a)) result.pass = false;
    if (wasserstein1d(a, c) >
        wasserstein1d(a, b) + wasserstein1d(b, c) + 1e-12) {
      result.pass = false;
    }
  }
  result.detail = result.pass ? "symmetric, triangle inequality holds"
                              : "pseudometric property violated";
  return result;
}

CheckResult check_fedavg() {
  CheckResult result{"fedavg_exactness", true, ""};
  std::vector<UploadEntry> entries(2);
  entries[0] = {0, {1.0}, {0.25}};
  entries[1] = {1, {5.0}, {0.75}};
  const auto forward_order = aggregate(entries);
  std::swap(entries[0], entries[1]);
  const auto reverse_order = aggregate(entries);
  result.pass = forward_order.size() == 1 && forward_order[0] == 4.0 &&
                reverse_order == forward_order;
  result.detail = result.pass ? "weighted mean exact and order-invariant"
                              : "aggregation mismatch";
  return result;
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
  return {check_gradients(), check_qp(),       check_extraction(),
          check_schedule(),  check_distance(), check_fedavg()};
}

}  // namespace fedcl
