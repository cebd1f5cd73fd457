#include "batchdc/validate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "batchdc/errors.hpp"
#include "batchdc/oracle.hpp"

namespace batchdc {

namespace {

struct Sample {
  std::int64_t index;  // -1 = identity
  const TopologyTask* task;
};

}  // namespace

ValidationReport validate_against_oracle(const PreparedGrid& prepared, std::span<const TopologyTask> tasks,
                                         const SolveConfig& config, const ValidationOptions& options) {
  const Grid& grid = prepared.grid();
  validate_config(config, grid, tasks);
  ValidationReport report;

  TopologyTask identity;
  identity.injection_sets.emplace_back(grid.injection_slot_count(), false);
  std::vector<Sample> samples{{-1, &identity}};
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), options.samples));
  std::sort(order.begin(), order.end());
  for (auto t : order) samples.push_back({static_cast<std::int64_t>(t), &tasks[t]});

  PtdfMatrix workspace;
  for (const auto& sample : samples) {
    const auto& task = *sample.task;
    const std::string name = sample.index < 0 ? "identity task" : "task " + std::to_string(sample.index);
    const auto ctx = branch_stage(prepared, task, config, workspace);
    const bool solver_ok = ctx.ptdf != nullptr;
    ++report.tasks_checked;

    const std::size_t n_inj = std::min(task.injection_sets.size(), options.max_injections);
    for (std::size_t j = 0; j < n_inj; ++j) {
      const auto& t_i = task.injection_sets[j];
      OracleFlows oracle;
      bool oracle_ok = true;
      try {
        oracle = oracle_solve(materialize(grid, task, t_i));
      } catch (const DisconnectedTopology&) {
        oracle_ok = false;
      }
      if (solver_ok != oracle_ok) {
        report.mismatches.push_back(name + ": solver " + (solver_ok ? "feasible" : "infeasible") + ", oracle " +
                                    (oracle_ok ? "connected" : "disconnected"));
        break;
      }
      if (!solver_ok) break;

      if (ctx.diagnostics.islanding_contingencies != oracle.islanding) {
        report.mismatches.push_back(name + ": islanding contingency sets differ");
      }
      const auto flows = candidate_flows(prepared, ctx, t_i);
      auto compare = [&](const Eigen::VectorXd& mine, const Eigen::VectorXd& theirs, std::int32_t contingency) {
        for (Eigen::Index r = 0; r < mine.size(); ++r) {
          const auto l = ctx.ptdf->row_branch[r];
          const double dev = std::abs(mine[r] - theirs[l]);
          ++report.flows_compared;
          if (!(dev <= report.max_deviation)) {
            report.max_deviation = std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev;
            report.worst_task = sample.index;
            report.worst_injection = j;
            report.worst_contingency = contingency;
            report.worst_branch = l;
          }
        }
      };
      compare(flows.n0, oracle.n0, -1);
      for (std::size_t c = 0; c < flows.n1.size(); ++c) {
        if (flows.n1[c].size() > 0 && oracle.n1[c].size() > 0)
          compare(flows.n1[c], oracle.n1[c], static_cast<std::int32_t>(c));
      }
    }
  }
  report.passed = report.mismatches.empty() && report.max_deviation <= options.tolerance;
  return report;
}

}  // namespace batchdc
