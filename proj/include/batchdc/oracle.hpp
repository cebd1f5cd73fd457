#pragma once

#include <vector>

#include <Eigen/Dense>

#include "batchdc/batch_solver.hpp"
#include "batchdc/grid.hpp"

namespace batchdc {

/// The grid a task describes, built explicitly: each split with a non-empty
/// move set gets a real node B, moved branches and B-assigned injections are
/// re-homed to it, disconnected branches are removed.
struct ExplicitTopology {
  Grid grid;
  /// Per original branch: index in `grid`, or kNoIndex when disconnected.
  std::vector<BranchIndex> branch_map;
  /// Per original injection: index in `grid` (injections are never removed).
  std::vector<InjectionIndex> injection_map;
  /// Contingencies of the original grid, in original order and indices.
  std::vector<ContingencyCase> contingencies;
};

/// Throws DisconnectedTopology when the N-0 grid falls apart.
ExplicitTopology materialize(const Grid& grid, const TopologyTask& task, const Assignment& t_i);

/// Flows per original branch (zero for disconnected branches).
struct OracleFlows {
  Eigen::VectorXd n0;
  std::vector<Eigen::VectorXd> n1;     // empty vector for islanding cases
  std::vector<std::int32_t> islanding; // contingency positions
};

/// Refactorizes the susceptance matrix for N-0 and for every contingency.
OracleFlows oracle_solve(const ExplicitTopology& topology);

/// PTDF of the explicit topology for every branch row and node column,
/// from a fresh factorization.
Eigen::MatrixXd oracle_ptdf(const ExplicitTopology& topology);

/// Bruteforce over T_i with the oracle. Metric uses the same islanding
/// policy as the solver; ties go to the lowest index.
struct OracleChoice {
  double metric = 0.0;
  std::size_t best_injection = 0;
  std::vector<double> metrics;
};
OracleChoice oracle_bruteforce(const Grid& grid, const TopologyTask& task, const SolveConfig& config);

}  // namespace batchdc
