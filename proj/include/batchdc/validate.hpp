#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "batchdc/batch_solver.hpp"

namespace batchdc {

struct ValidationOptions {
  std::size_t samples = 10;        // random tasks checked, plus the identity task
  std::size_t max_injections = 8;  // t_i per task compared
  double tolerance = 1e-6;         // MW
  std::uint64_t seed = 0;
};

struct ValidationReport {
  double max_deviation = 0.0;
  // Where the worst deviation happened; task is an index into the input
  // span, or -1 for the identity task. contingency -1 means N-0.
  std::int64_t worst_task = -1;
  std::size_t worst_injection = 0;
  std::int32_t worst_contingency = -1;
  BranchIndex worst_branch = kNoIndex;
  std::size_t tasks_checked = 0;
  std::size_t flows_compared = 0;
  /// Disagreements on feasibility or on the islanding contingency set.
  std::vector<std::string> mismatches;
  bool passed = false;
};

/// Runs the batch solver and the refactorizing oracle on sampled tasks and
/// compares every N-0 and N-1 flow on the retained rows.
ValidationReport validate_against_oracle(const PreparedGrid& prepared, std::span<const TopologyTask> tasks,
                                         const SolveConfig& config, const ValidationOptions& options);

}  // namespace batchdc
