#pragma once

#include <string>
#include <vector>

#include "fedcl/mlp.hpp"

namespace fedcl {

/// Constraint gradients G (k rows of dimension n) with a source tag per row
/// (task id or "pre-aggregation"), used only for diagnostics.
struct ConstraintSet {
  std::vector<ParamVector> rows;
  std::vector<std::string> labels;
};

/// Solution of the non-negative dual: v >= 0 minimizing
/// 1/2 v'GG'v + (Gg)'v. `residual` is the max KKT stationarity violation.
struct QpSolution {
  std::vector<double> v;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

struct IntegrateDiag {
  bool projected = false;
  bool converged = true;
  int iterations = 0;
  double residual = 0.0;
  double min_row_inner = 0.0;  // min <row, g'> after integration
};

struct BoundCheck {
  double norm_sq = 0.0;
  double bound = 0.0;
  bool exceeded = false;
};

inline constexpr double kQpTol = 1e-10;
inline constexpr int kQpMaxIter = 10000;

/// True iff some constraint row has <row, g> < -eps.
bool needs_projection(const ConstraintSet& constraints, const ParamVector& g,
                      double eps);

/// Cyclic coordinate descent on the k-dimensional dual. Zero-norm rows are
/// vacuous and get v_j = 0. Returns the best iterate flagged non-converged
/// when max_iter sweeps do not reach `tol`.
QpSolution solve_dual(const ConstraintSet& constraints, const ParamVector& g,
                      double tol = kQpTol, int max_iter = kQpMaxIter);

/// Dual objective 1/2 v'GG'v + (Gg)'v, for oracle comparison.
double dual_objective(const ConstraintSet& constraints, const ParamVector& g,
                      const std::vector<double>& v);

/// Returns g' = G'v + g with <row, g'> >= -1e-6 for every row. When no row
/// is obtuse against g, returns g without any floating-point change. On
/// solver non-convergence falls back to the unprojected g (soft failure,
/// reported through `diag`).
ParamVector integrate(const ConstraintSet& constraints, const ParamVector& g,
                      double tol = kQpTol, int max_iter = kQpMaxIter,
                      IntegrateDiag* diag = nullptr);

/// Records ||g'||^2 against the gradient-norm bound; never alters training.
BoundCheck check_bounded(const ParamVector& g_prime, double lambda_bound);

}  // namespace fedcl
