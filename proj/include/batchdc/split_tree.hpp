#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "batchdc/batch_solver.hpp"

namespace batchdc {

/// Prefix tree over canonical split sequences. Node 0 is the unsplit base;
/// every other node is one BSDF application on top of its parent.
struct SplitTree {
  struct Node {
    SplitAction split;                 // unused for the root
    std::int32_t parent = -1;
    std::vector<std::int32_t> children;
    std::vector<std::size_t> tasks;    // tasks whose split sequence ends here
    std::size_t level = 0;
  };
  std::vector<Node> nodes;
  /// Longest split sequence, plus one when a task at that depth also
  /// disconnects branches (its t_d copy lives below the leaf).
  std::size_t depth = 0;

  std::size_t edge_count() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
};

SplitTree build_tree(std::span<const TopologyTask> tasks);

/// BSDF applications a flat scheduler performs for the same tasks.
std::size_t flat_bsdf_applications(std::span<const TopologyTask> tasks);

struct TreeOptions {
  /// Hand first-level subtrees to OpenMP workers. They all read the shared
  /// base, so at most 1 + workers * depth matrices are live.
  bool parallel_subtrees = false;
};

/// Depth-first execution. Results are bit-identical to solve_batch.
std::vector<SolveResult> execute_tree(const PreparedGrid& prepared, const SplitTree& tree,
                                      std::span<const TopologyTask> tasks, const SolveConfig& config,
                                      SchedulerStats* stats = nullptr, TreeOptions options = {});

}  // namespace batchdc
