#pragma once

#include <string>
#include <vector>

#include "fedcl/federation.hpp"

namespace fedcl {

/// Per-task snapshot of client states plus an opaque harness blob (the
/// run's partial report), written as a little-endian binary file with a
/// versioned magic header. Partition masks are rebuilt from the shape on
/// load; within-round transients are not part of the format.
void save_checkpoint(const std::string& path,
                     const std::vector<ClientState>& clients,
                     const std::string& blob);

struct Checkpoint {
  std::vector<ClientState> clients;
  std::string blob;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace fedcl
