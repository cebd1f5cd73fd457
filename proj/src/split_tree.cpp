#include "batchdc/split_tree.hpp"

#include <algorithm>
#include <atomic>
#include <exception>

#include <omp.h>

#include "batchdc/errors.hpp"

namespace batchdc {

SplitTree build_tree(std::span<const TopologyTask> tasks) {
  SplitTree tree;
  tree.nodes.emplace_back();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto splits = canonical_splits(tasks[t].splits);
    std::int32_t at = 0;
    for (const auto& split : splits) {
      std::int32_t next = -1;
      for (auto child : tree.nodes[at].children) {
        if (tree.nodes[child].split == split) {
          next = child;
          break;
        }
      }
      if (next < 0) {
        next = static_cast<std::int32_t>(tree.nodes.size());
        SplitTree::Node node;
        node.split = split;
        node.parent = at;
        node.level = tree.nodes[at].level + 1;
        tree.nodes.push_back(std::move(node));
        tree.nodes[at].children.push_back(next);
      }
      at = next;
    }
    tree.nodes[at].tasks.push_back(t);
    const std::size_t need = splits.size() + (tasks[t].disconnections.empty() ? 0 : 1);
    tree.depth = std::max(tree.depth, need);
  }
  return tree;
}

std::size_t flat_bsdf_applications(std::span<const TopologyTask> tasks) {
  std::size_t n = 0;
  for (const auto& task : tasks) n += task.splits.size();
  return n;
}

namespace {

struct Walker {
  const PreparedGrid& prepared;
  const SplitTree& tree;
  std::span<const TopologyTask> tasks;
  const SolveConfig& config;
  std::vector<SolveResult>& results;
  std::atomic<std::size_t>& applications;
  std::atomic<std::size_t>& live;
  std::atomic<std::size_t>& peak;

  void acquire(std::size_t n = 1) {
    const auto now = live.fetch_add(n) + n;
    auto seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
  }
  void release(std::size_t n = 1) { live.fetch_sub(n); }

  void solve_tasks(const SplitTree::Node& node, const PtdfMatrix& ptdf, const Diagnostics& path) {
    for (auto t : node.tasks) {
      const auto& task = tasks[t];
      if (config.dedupe_symmetric) {
        const auto deduped = dedupe_symmetric_injections(task, prepared.grid());
        SolveConfig inner = config;
        inner.dedupe_symmetric = false;
        results[t] = run(ptdf, deduped.task, inner, path);
        results[t].best_injection = deduped.original_index[results[t].best_injection];
      } else {
        results[t] = run(ptdf, task, config, path);
      }
    }
  }

  SolveResult run(const PtdfMatrix& ptdf, const TopologyTask& task, const SolveConfig& cfg, const Diagnostics& path) {
    const bool copies = !task.disconnections.empty();
    if (copies) acquire();
    const auto ctx = finish_branch_stage(prepared, ptdf, task, cfg, path);
    auto result = injection_stage(prepared, ctx, task, cfg);
    if (copies) release();
    return result;
  }

  void fail_subtree(std::int32_t at, const Diagnostics& path, const std::string& error) {
    for (auto t : tree.nodes[at].tasks) {
      results[t] = SolveResult{};
      results[t].diagnostics = path;
      results[t].diagnostics.feasible = false;
      results[t].diagnostics.error = error;
    }
    for (auto child : tree.nodes[at].children) fail_subtree(child, path, error);
  }

  // `parent` is the PTDF of the parent node; the child's matrix is a copy
  // that lives until its subtree is done.
  void descend(std::int32_t at, const PtdfMatrix& parent, Diagnostics path) {
    const auto& node = tree.nodes[at];
    PtdfMatrix ptdf = parent;
    acquire();
    try {
      const auto update = compute_bsdf(ptdf, prepared.grid(), node.split.substation, node.split.branch_assignment);
      apply_bsdf_in_place(ptdf, update);
      ++applications;
      if (update.identity) path.identity_splits.push_back(node.split.substation);
    } catch (const SingularSplit& e) {
      release();
      fail_subtree(at, path, e.what());
      return;
    } catch (const DegenerateSplit& e) {
      release();
      fail_subtree(at, path, e.what());
      return;
    }
    solve_tasks(node, ptdf, path);
    for (auto child : node.children) descend(child, ptdf, path);
    ptdf = PtdfMatrix{};
    release();
  }
};

}  // namespace

std::vector<SolveResult> execute_tree(const PreparedGrid& prepared, const SplitTree& tree,
                                      std::span<const TopologyTask> tasks, const SolveConfig& config,
                                      SchedulerStats* stats, TreeOptions options) {
  validate_config(config, prepared.grid(), tasks);
  std::vector<SolveResult> results(tasks.size());
  std::atomic<std::size_t> applications{0}, live{0}, peak{0};
  Walker walker{prepared, tree, tasks, config, results, applications, live, peak};

  // The shared base counts as one live matrix.
  walker.acquire();
  const auto& root = tree.nodes.front();
  walker.solve_tasks(root, prepared.base(), Diagnostics{});
  if (!options.parallel_subtrees) {
    for (auto child : root.children) walker.descend(child, prepared.base(), Diagnostics{});
  } else {
    const auto n = static_cast<std::int64_t>(root.children.size());
    const int threads = config.workers > 0 ? config.workers : omp_get_max_threads();
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        walker.descend(root.children[static_cast<std::size_t>(i)], prepared.base(), Diagnostics{});
      } catch (...) {
#pragma omp critical(batchdc_tree_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  walker.release();

  if (stats) {
    stats->bsdf_applications = applications.load();
    stats->peak_live_ptdfs = peak.load();
  }
  return results;
}

}  // namespace batchdc
