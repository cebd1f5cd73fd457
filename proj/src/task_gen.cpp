#include "batchdc/task_gen.hpp"

#include <algorithm>
#include <numeric>

#include "batchdc/errors.hpp"
#include "union_find.hpp"

namespace batchdc {

bool n0_connected(const Grid& grid, std::span<const SplitAction> splits, std::span<const BranchIndex> disconnections) {
  std::vector<NodeIndex> from(grid.branch_count()), to(grid.branch_count());
  for (std::size_t l = 0; l < grid.branch_count(); ++l) {
    from[l] = grid.branches()[l].from;
    to[l] = grid.branches()[l].to;
  }
  std::vector<char> has_b(grid.substations().size(), 0);
  for (const auto& split : splits) {
    const auto& sub = grid.substations()[split.substation];
    for (std::size_t j = 0; j < sub.branch_elements.size(); ++j) {
      if (!split.branch_assignment[j]) continue;
      const auto l = sub.branch_elements[j];
      (from[l] == sub.node ? from[l] : to[l]) = grid.split_node(split.substation);
      has_b[split.substation] = 1;
    }
  }
  const std::size_t nodes = grid.node_count() + static_cast<std::size_t>(std::count(has_b.begin(), has_b.end(), 1));
  // Dense renumbering of the split nodes that exist.
  std::vector<NodeIndex> remap(grid.node_count() + grid.substations().size(), kNoIndex);
  std::iota(remap.begin(), remap.begin() + static_cast<std::ptrdiff_t>(grid.node_count()), 0);
  NodeIndex next = static_cast<NodeIndex>(grid.node_count());
  for (std::size_t s = 0; s < has_b.size(); ++s) {
    if (has_b[s]) remap[grid.split_node(s)] = next++;
  }
  detail::UnionFind uf(nodes);
  for (std::size_t l = 0; l < grid.branch_count(); ++l) {
    if (std::find(disconnections.begin(), disconnections.end(), static_cast<BranchIndex>(l)) != disconnections.end())
      continue;
    uf.unite(static_cast<std::size_t>(remap[from[l]]), static_cast<std::size_t>(remap[to[l]]));
  }
  return uf.components() == 1;
}

bool random_split(const Grid& grid, std::int32_t substation, std::vector<SplitAction>& splits, std::mt19937_64& rng,
                  int attempts) {
  const auto& sub = grid.substations().at(static_cast<std::size_t>(substation));
  const auto n = sub.branch_elements.size();
  if (n < 2) return false;
  std::bernoulli_distribution coin(0.5);
  for (int a = 0; a < attempts; ++a) {
    SplitAction split{substation, Assignment(n)};
    std::size_t moved = 0;
    for (std::size_t j = 0; j < n; ++j) moved += (split.branch_assignment[j] = coin(rng));
    if (moved == 0 || moved == n) continue;
    splits.push_back(split);
    if (n0_connected(grid, splits, {})) return true;
    splits.pop_back();
  }
  return false;
}

std::vector<TopologyTask> generate_tasks(const Grid& grid, const TaskGenOptions& options) {
  if (options.injection_sets < 1) throw ConfigError("|T_i| must be at least 1");
  std::mt19937_64 rng(options.seed);
  std::bernoulli_distribution coin(0.5);
  const auto subs = static_cast<std::int32_t>(grid.substations().size());
  const std::size_t depth = std::min<std::size_t>(options.splits, static_cast<std::size_t>(subs));

  std::vector<BranchIndex> pool;
  for (const auto& c : grid.contingencies()) {
    if (c.kind == ContingencyKind::single_branch) pool.push_back(c.branches.front());
  }
  if (options.disconnections > pool.size()) throw ConfigError("not enough disconnectable branches");

  std::vector<TopologyTask> tasks;
  tasks.reserve(options.tasks);
  std::vector<std::int32_t> order(static_cast<std::size_t>(subs));
  std::iota(order.begin(), order.end(), 0);
  int stalls = 0;
  while (tasks.size() < options.tasks) {
    TopologyTask task;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto s : order) {
      if (task.splits.size() == depth) break;
      random_split(grid, s, task.splits, rng);
    }
    if (task.splits.size() < depth) {
      if (++stalls > 1000) throw ConfigError("cannot find " + std::to_string(depth) + " compatible splits");
      continue;
    }
    if (options.disconnections > 0) {
      auto candidates = pool;
      std::shuffle(candidates.begin(), candidates.end(), rng);
      for (auto l : candidates) {
        if (task.disconnections.size() == options.disconnections) break;
        task.disconnections.push_back(l);
        if (!n0_connected(grid, task.splits, task.disconnections)) task.disconnections.pop_back();
      }
      if (task.disconnections.size() < options.disconnections) {
        if (++stalls > 1000) throw ConfigError("cannot find connected disconnection sets");
        continue;
      }
    }
    for (std::size_t j = 0; j < options.injection_sets; ++j) {
      Assignment t_i(grid.injection_slot_count());
      for (std::size_t k = 0; k < t_i.size(); ++k) t_i[k] = coin(rng);
      task.injection_sets.push_back(std::move(t_i));
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace batchdc
