#pragma once

// Invariant checks run by `fedaa selftest` and the test suite.

#include <cstdint>
#include <string>
#include <vector>

namespace fedaa {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// simplex_actions, soft_update, replay_fifo, partition_completeness,
/// distance_symmetry, convex_hull_aggregation.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 1);

}  // namespace fedaa
