#include "fedcl/integrator.hpp"

#include <algorithm>
#include <cmath>

#include "fedcl/errors.hpp"
#include "fedcl/matrix.hpp"

namespace fedcl {

namespace {

void check_rows(const ConstraintSet& constraints, const ParamVector& g) {
  for (const auto& row : constraints.rows) {
    if (row.size() != g.size()) {
      throw DimensionError("integrator: constraint row length mismatch");
    }
  }
}

}  // namespace

bool needs_projection(const ConstraintSet& constraints, const ParamVector& g,
                      double eps) {
  check_rows(constraints, g);
  for (const auto& row : constraints.rows) {
    if (dot(row, g) < -eps) return true;
  }
  return false;
}

QpSolution solve_dual(const ConstraintSet& constraints, const ParamVector& g,
                      double tol, int max_iter) {
  check_rows(constraints, g);
  if (constraints.rows.empty()) throw ConfigError("solve_dual: empty constraint set");
  if (!(tol > 0.0)) throw ConfigError("solve_dual: tol must be positive");

  const int k = static_cast<int>(constraints.rows.size());

  // Rows with zero norm impose no constraint; exclude them so the diagonal
  // of GG' stays positive.
  std::vector<int> active;
  active.reserve(k);
  for (int j = 0; j < k; ++j) {
    if (norm_sq(constraints.rows[j]) > 0.0) active.push_back(j);
  }

  QpSolution solution;
  solution.v.assign(k, 0.0);
  if (active.empty()) {
    solution.converged = true;
    return solution;
  }

  const int ka = static_cast<int>(active.size());
  std::vector<double> quad(static_cast<std::size_t>(ka) * ka);  // GG' on active rows
  std::vector<double> lin(ka);                                  // Gg on active rows
  for (int a = 0; a < ka; ++a) {
    for (int b = a; b < ka; ++b) {
      const double q = dot(constraints.rows[active[a]], constraints.rows[active[b]]);
      quad[static_cast<std::size_t>(a) * ka + b] = q;
      quad[static_cast<std::size_t>(b) * ka + a] = q;
    }
    lin[a] = dot(constraints.rows[active[a]], g);
  }

  std::vector<double> v(ka, 0.0);
  const auto grad_at = [&](int j) {
    double s = lin[j];
    const double* qrow = quad.data() + static_cast<std::size_t>(j) * ka;
    for (int i = 0; i < ka; ++i) s += qrow[i] * v[i];
    return s;
  };

  int sweeps = 0;
  bool converged = false;
  double residual = 0.0;
  while (sweeps < max_iter) {
    ++sweeps;
    for (int j = 0; j < ka; ++j) {
      const double qjj = quad[static_cast<std::size_t>(j) * ka + j];
      v[j] = std::max(0.0, v[j] - grad_at(j) / qjj);
    }
    residual = 0.0;
    for (int j = 0; j < ka; ++j) {
      const double d = grad_at(j);
      const double viol = v[j] > 0.0 ? std::fabs(d) : std::max(0.0, -d);
      residual = std::max(residual, viol);
    }
    if (residual <= tol) {
      converged = true;
      break;
    }
  }

  for (int a = 0; a < ka; ++a) solution.v[active[a]] = v[a];
  solution.iterations = sweeps;
  solution.residual = residual;
  solution.converged = converged;
  return solution;
}

double dual_objective(const ConstraintSet& constraints, const ParamVector& g,
                      const std::vector<double>& v) {
  check_rows(constraints, g);
  if (v.size() != constraints.rows.size()) {
    throw DimensionError("dual_objective: v length mismatch");
  }
  const int k = static_cast<int>(v.size());
  double obj = 0.0;
  for (int a = 0; a < k; ++a) {
    if (v[a] == 0.0) continue;
    obj += v[a] * dot(constraints.rows[a], g);
    for (int b = 0; b < k; ++b) {
      if (v[b] == 0.0) continue;
      obj += 0.5 * v[a] * v[b] * dot(constraints.rows[a], constraints.rows[b]);
    }
  }
  return obj;
}

ParamVector integrate(const ConstraintSet& constraints, const ParamVector& g,
                      double tol, int max_iter, IntegrateDiag* diag) {
  check_rows(constraints, g);
  const auto min_inner = [&](const ParamVector& x) {
    double m = 0.0;
    bool first = true;
    for (const auto& row : constraints.rows) {
      const double inner = dot(row, x);
      m = first ? inner : std::min(m, inner);
      first = false;
    }
    return m;
  };

  IntegrateDiag local;
  if (!needs_projection(constraints, g, 0.0)) {
    local.projected = false;
    local.min_row_inner = min_inner(g);
    if (diag) *diag = local;
    return g;
  }

  const QpSolution solution = solve_dual(constraints, g, tol, max_iter);
  local.converged = solution.converged;
  local.iterations = solution.iterations;
  local.residual = solution.residual;

  if (!solution.converged) {
    // Soft failure: keep training with the unprojected gradient.
    local.projected = false;
    local.min_row_inner = min_inner(g);
    if (diag) *diag = local;
    return g;
  }

  ParamVector g_prime = g;
  for (std::size_t j = 0; j < constraints.rows.size(); ++j) {
    if (solution.v[j] != 0.0) axpy(solution.v[j], constraints.rows[j], g_prime);
  }

  local.projected = true;
  local.min_row_inner = min_inner(g_prime);
  if (diag) *diag = local;
  return g_prime;
}

BoundCheck check_bounded(const ParamVector& g_prime, double lambda_bound) {
  BoundCheck check;
  check.norm_sq = norm_sq(g_prime);
  check.bound = lambda_bound;
  check.exceeded = check.norm_sq > lambda_bound;
  return check;
}

}  // namespace fedcl
