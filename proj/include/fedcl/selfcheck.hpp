#pragma once

#include <string>
#include <vector>

namespace fedcl {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Quick independent verification of the numerical core: finite-difference
/// gradient checks, QP enumeration comparison, extraction vs a full sort,
/// the learning-rate bound sweep, distance properties, and FedAvg
/// arithmetic. Reference computations here are self-contained and do not
/// reuse the code paths they verify.
std::vector<CheckResult> run_selfcheck();

}  // namespace fedcl
