#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "batchdc/batch_solver.hpp"
#include "batchdc/grid.hpp"

namespace batchdc {

struct TaskGenOptions {
  std::size_t tasks = 100;
  std::size_t splits = 3;          // per task, capped by the substation count
  std::size_t injection_sets = 1;  // |T_i|
  std::size_t disconnections = 0;  // drawn from single-branch contingency branches
  std::uint64_t seed = 0;
};

/// Seeded random tasks: substations drawn without replacement, uniform
/// assignment bits with both busbars keeping a branch, and rejection of
/// anything that disconnects the N-0 grid.
std::vector<TopologyTask> generate_tasks(const Grid& grid, const TaskGenOptions& options);

/// True iff the N-0 grid of `splits` + `disconnections` is connected.
bool n0_connected(const Grid& grid, std::span<const SplitAction> splits, std::span<const BranchIndex> disconnections);

/// A random split of `substation` that keeps `splits` connected at N-0.
/// Returns false after `attempts` rejections.
bool random_split(const Grid& grid, std::int32_t substation, std::vector<SplitAction>& splits, std::mt19937_64& rng,
                  int attempts = 64);

}  // namespace batchdc
