#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fedcl/errors.hpp"
#include "fedcl/integrator.hpp"
#include "fedcl/rng.hpp"
#include "oracles.hpp"

using namespace fedcl;

namespace {

ParamVector random_vector(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

ConstraintSet make_set(std::vector<ParamVector> rows) {
  ConstraintSet set;
  set.rows = std::move(rows);
  for (std::size_t i = 0; i < set.rows.size(); ++i) {
    set.labels.push_back("task:" + std::to_string(i));
  }
  return set;
}

}  // namespace

TEST_CASE("needs_projection basics") {
  const ParamVector g{1.0, 2.0, -1.0};
  CHECK_FALSE(needs_projection(make_set({g}), g, 1e-9));
  ParamVector neg = g;
  for (double& x : neg) x = -x;
  CHECK(needs_projection(make_set({neg}), g, 1e-9));
  const ParamVector orth{2.0, -1.0, 0.0};  // <orth, g> = 0
  CHECK_FALSE(needs_projection(make_set({orth}), g, 1e-9));
}

TEST_CASE("solve_dual returns v=0 when all constraints are satisfied") {
  Rng rng(41);
  const ParamVector g = random_vector(rng, 6);
  ConstraintSet set = make_set({g});
  const auto solution = solve_dual(set, g);
  CHECK(solution.converged);
  for (double v : solution.v) CHECK(v == 0.0);
}

TEST_CASE("single obtuse constraint has the closed-form multiplier") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector g = random_vector(rng, 8);
    ParamVector row = random_vector(rng, 8);
    if (dot(row, g) >= 0.0) {
      for (double& x : row) x = -x;
    }
    if (dot(row, g) >= 0.0) continue;  // g ~ 0 edge, not interesting

    const auto solution = solve_dual(make_set({row}), g);
    REQUIRE(solution.converged);
    const double expected = -dot(row, g) / norm_sq(row);
    CHECK(std::fabs(solution.v[0] - expected) <= 1e-10);
  }
}

TEST_CASE("dual objective matches the active-set enumeration oracle") {
  Rng rng(4242);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const int n = 2 + static_cast<int>(rng.below(11));
    const ParamVector g = random_vector(rng, n);
    std::vector<ParamVector> rows;
    for (int j = 0; j < k; ++j) rows.push_back(random_vector(rng, n));
    const ConstraintSet set = make_set(rows);

    const auto solution = solve_dual(set, g);
    REQUIRE(solution.converged);
    for (double v : solution.v) CHECK(v >= 0.0);

    const auto best = oracle::enumerate_qp(rows, g);
    REQUIRE(best.found);
    const double ours = dual_objective(set, g, solution.v);
    const double theirs = dual_objective(set, g, best.v);
    CHECK(ours <= theirs + 1e-8);
    CHECK(std::fabs(ours - theirs) <= 1e-8);
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("integrate satisfies every constraint and rotates minimally") {
  Rng rng(777);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const int n = 2 + static_cast<int>(rng.below(11));
    const ParamVector g = random_vector(rng, n);
    std::vector<ParamVector> rows;
    for (int j = 0; j < k; ++j) rows.push_back(random_vector(rng, n));
    const ConstraintSet set = make_set(rows);

    IntegrateDiag diag;
    const ParamVector g_prime = integrate(set, g, kQpTol, kQpMaxIter, &diag);
    for (const auto& row : set.rows) {
      CHECK(dot(row, g_prime) >= -1e-6);
    }

    const auto best = oracle::enumerate_qp(rows, g);
    REQUIRE(best.found);
    double dist_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      dist_sq += (g_prime[i] - g[i]) * (g_prime[i] - g[i]);
    }
    CHECK(std::sqrt(dist_sq) <=
          std::sqrt(2.0 * best.primal_objective) + 1e-6);
  }
}

TEST_CASE("acute inputs return g bitwise") {
  Rng rng(31415);
  const ParamVector g = random_vector(rng, 10);
  std::vector<ParamVector> rows;
  for (int j = 0; j < 3; ++j) {
    ParamVector row = random_vector(rng, 10);
    if (dot(row, g) < 0.0) {
      for (double& x : row) x = -x;
    }
    rows.push_back(row);
  }
  const ParamVector g_prime = integrate(make_set(rows), g);
  CHECK(g_prime == g);
}

TEST_CASE("single-constraint integration is the orthogonal projection") {
  Rng rng(223);
  for (int trial = 0; trial < 50; ++trial) {
    const ParamVector g = random_vector(rng, 9);
    ParamVector row = random_vector(rng, 9);
    if (dot(row, g) >= 0.0) {
      for (double& x : row) x = -x;
    }
    if (dot(row, g) >= 0.0) continue;

    const ParamVector g_prime = integrate(make_set({row}), g);
    const double coeff = dot(row, g) / norm_sq(row);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::fabs(g_prime[i] - (g[i] - coeff * row[i])) <= 1e-10);
    }
    CHECK(std::fabs(dot(row, g_prime)) <= 1e-9);
  }
}

TEST_CASE("2-d toy instance solved by hand") {
  const ParamVector g{1.0, 0.0};
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const ParamVector g1{-inv_sqrt2, inv_sqrt2};
  const ParamVector g_prime = integrate(make_set({g1}), g);
  CHECK(g_prime[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g_prime[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::fabs(dot(g1, g_prime)) <= 1e-12);
}

TEST_CASE("projection is positively homogeneous in g") {
  Rng rng(161803);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 6;
    const ParamVector g = random_vector(rng, n);
    std::vector<ParamVector> rows;
    for (int j = 0; j < 3; ++j) rows.push_back(random_vector(rng, n));
    const ConstraintSet set = make_set(rows);

    const double c = 0.25 + 4.0 * rng.uniform01();
    ParamVector scaled = g;
    for (double& x : scaled) x *= c;

    // Solve tighter than the shipped default so the comparison measures the
    // QP's homogeneity rather than the stopping tolerance.
    const ParamVector a = integrate(set, scaled, 1e-13);
    const ParamVector b = integrate(set, g, 1e-13);
    double diff_sq = 0.0;
    double ref_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      diff_sq += (a[i] - c * b[i]) * (a[i] - c * b[i]);
      ref_sq += (c * b[i]) * (c * b[i]);
    }
    CHECK(std::sqrt(diff_sq) <= 1e-9 * std::max(1.0, std::sqrt(ref_sq)));
  }
}

TEST_CASE("zero-norm rows are dropped as vacuous") {
  const ParamVector g{1.0, -1.0};
  const ParamVector zero{0.0, 0.0};
  const ParamVector obtuse{-1.0, 0.0};
  const auto solution = solve_dual(make_set({zero, obtuse}), g);
  CHECK(solution.converged);
  CHECK(solution.v[0] == 0.0);
  CHECK(solution.v[1] == doctest::Approx(1.0));

  const ParamVector g_prime = integrate(make_set({zero, obtuse}), g);
  CHECK(g_prime[0] == doctest::Approx(0.0));
  CHECK(g_prime[1] == doctest::Approx(-1.0));
}

TEST_CASE("non-convergence falls back to the unprojected gradient") {
  const ParamVector g{1.0, 0.0};
  const ParamVector row{-1.0, 0.5};
  IntegrateDiag diag;
  // max_iter=0 forces the non-converged path
  const ParamVector g_prime = integrate(make_set({row}), g, 1e-10, 0, &diag);
  CHECK(g_prime == g);
  CHECK_FALSE(diag.converged);
  CHECK_FALSE(diag.projected);
}

TEST_CASE("check_bounded flags only above the bound") {
  const BoundCheck zero = check_bounded({0.0, 0.0}, 1.0);
  CHECK(zero.norm_sq == 0.0);
  CHECK_FALSE(zero.exceeded);

  const BoundCheck high = check_bounded({2.0, 0.0}, 1.0);
  CHECK(high.norm_sq == doctest::Approx(4.0));
  CHECK(high.exceeded);
}

TEST_CASE("errors on malformed inputs") {
  const ParamVector g{1.0, 2.0};
  ConstraintSet bad = make_set({{1.0, 2.0, 3.0}});
  CHECK_THROWS_AS(needs_projection(bad, g, 0.0), DimensionError);
  ConstraintSet empty;
  CHECK_THROWS_AS(solve_dual(empty, g), ConfigError);
}
