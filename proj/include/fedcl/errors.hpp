#pragma once

#include <stdexcept>
#include <string>

namespace fedcl {

/// Invalid configuration value (bad rho, unknown strategy, malformed file).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Federation protocol violation (empty aggregation, mismatched slices).
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rejected input: shapes or lengths do not agree.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fedcl
