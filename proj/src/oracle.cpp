#include "batchdc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "batchdc/errors.hpp"
#include "union_find.hpp"

namespace batchdc {

ExplicitTopology materialize(const Grid& grid, const TopologyTask& task, const Assignment& t_i) {
  GridData data;
  data.node_ids = grid.node_ids();
  data.injections = grid.injections();
  data.slack = grid.slack();
  std::vector<Branch> branches = grid.branches();

  const auto& subs = grid.substations();
  std::vector<NodeIndex> node_b(subs.size(), kNoIndex);
  for (const auto& split : task.splits) {
    const auto& sub = subs.at(static_cast<std::size_t>(split.substation));
    if (std::none_of(split.branch_assignment.begin(), split.branch_assignment.end(), [](bool b) { return b; }))
      continue;
    const auto b = static_cast<NodeIndex>(data.node_ids.size());
    node_b[split.substation] = b;
    data.node_ids.push_back(grid.node_ids()[sub.node] + "#B");
    for (std::size_t j = 0; j < sub.branch_elements.size(); ++j) {
      if (!split.branch_assignment[j]) continue;
      auto& br = branches[sub.branch_elements[j]];
      (br.from == sub.node ? br.from : br.to) = b;
    }
  }

  std::size_t slot = 0;
  for (std::size_t s = 0; s < subs.size(); ++s) {
    for (auto i : subs[s].injection_elements) {
      if (t_i.at(slot++) && node_b[s] != kNoIndex) data.injections[i].node = node_b[s];
    }
  }

  std::vector<BranchIndex> branch_map(branches.size(), kNoIndex);
  for (std::size_t l = 0; l < branches.size(); ++l) {
    if (std::find(task.disconnections.begin(), task.disconnections.end(), static_cast<BranchIndex>(l)) !=
        task.disconnections.end())
      continue;
    branch_map[l] = static_cast<BranchIndex>(data.branches.size());
    data.branches.push_back(branches[l]);
  }
  std::vector<InjectionIndex> injection_map(data.injections.size());
  for (std::size_t i = 0; i < data.injections.size(); ++i) injection_map[i] = static_cast<InjectionIndex>(i);

  detail::UnionFind uf(data.node_ids.size());
  for (const auto& br : data.branches) uf.unite(br.from, br.to);
  if (uf.components() != 1) throw DisconnectedTopology("task leaves the N-0 grid disconnected");
  return ExplicitTopology{Grid(std::move(data)), std::move(branch_map), std::move(injection_map),
                          grid.contingencies()};
}

namespace {

// Fresh factorization of the grid without `removed` branches. Returns flows
// per explicit branch, or an empty vector when the remaining grid is not
// connected.
Eigen::VectorXd solve_flows(const Grid& grid, const std::vector<char>& removed, const std::vector<double>& power) {
  const auto n = grid.node_count();
  const auto& branches = grid.branches();
  detail::UnionFind uf(n);
  for (std::size_t l = 0; l < branches.size(); ++l) {
    if (!removed[l]) uf.unite(branches[l].from, branches[l].to);
  }
  if (uf.components() != 1) return {};

  const NodeIndex slack = grid.slack();
  auto reduced = [slack](NodeIndex v) { return v < slack ? v : v - 1; };
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t l = 0; l < branches.size(); ++l) {
    if (removed[l]) continue;
    const auto& br = branches[l];
    const bool f = br.from != slack, t = br.to != slack;
    if (f) trip.emplace_back(reduced(br.from), reduced(br.from), br.susceptance);
    if (t) trip.emplace_back(reduced(br.to), reduced(br.to), br.susceptance);
    if (f && t) {
      trip.emplace_back(reduced(br.from), reduced(br.to), -br.susceptance);
      trip.emplace_back(reduced(br.to), reduced(br.from), -br.susceptance);
    }
  }
  const auto m = static_cast<Eigen::Index>(n) - 1;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (m > 0) {
    Eigen::SparseMatrix<double> lap(m, m);
    lap.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rhs(m);
    for (NodeIndex v = 0; v < static_cast<NodeIndex>(n); ++v) {
      if (v != slack) rhs[reduced(v)] = power[v];
    }
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("oracle factorization failed");
    const Eigen::VectorXd x = ldlt.solve(rhs);
    for (NodeIndex v = 0; v < static_cast<NodeIndex>(n); ++v) {
      if (v != slack) theta[v] = x[reduced(v)];
    }
  }
  Eigen::VectorXd flows = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(branches.size()));
  for (std::size_t l = 0; l < branches.size(); ++l) {
    if (!removed[l]) flows[l] = branches[l].susceptance * (theta[branches[l].from] - theta[branches[l].to]);
  }
  return flows;
}

Eigen::VectorXd to_original(const ExplicitTopology& topology, const Eigen::VectorXd& explicit_flows) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(topology.branch_map.size()));
  for (std::size_t l = 0; l < topology.branch_map.size(); ++l) {
    if (topology.branch_map[l] != kNoIndex) out[l] = explicit_flows[topology.branch_map[l]];
  }
  return out;
}

}  // namespace

OracleFlows oracle_solve(const ExplicitTopology& topology) {
  const Grid& g = topology.grid;
  const auto power = g.nodal_power();
  std::vector<char> removed(g.branch_count(), 0);
  OracleFlows out;
  out.n0 = to_original(topology, solve_flows(g, removed, power));

  out.n1.resize(topology.contingencies.size());
  for (std::size_t c = 0; c < topology.contingencies.size(); ++c) {
    const auto& cc = topology.contingencies[c];
    std::fill(removed.begin(), removed.end(), 0);
    auto p = power;
    if (cc.kind == ContingencyKind::injection) {
      const auto& inj = g.injections()[topology.injection_map[cc.injection]];
      p[inj.node] -= inj.setpoint;
    } else {
      for (auto l : cc.branches) {
        if (topology.branch_map[l] != kNoIndex) removed[topology.branch_map[l]] = 1;
      }
    }
    const auto flows = solve_flows(g, removed, p);
    if (flows.size() == 0) {
      out.islanding.push_back(static_cast<std::int32_t>(c));
      continue;
    }
    out.n1[c] = to_original(topology, flows);
  }
  return out;
}

Eigen::MatrixXd oracle_ptdf(const ExplicitTopology& topology) {
  const Grid& g = topology.grid;
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd ptdf = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.branch_count()), n);
  std::vector<char> removed(g.branch_count(), 0);
  std::vector<double> power(g.node_count(), 0.0);
  for (NodeIndex v = 0; v < n; ++v) {
    if (v == g.slack()) continue;
    power[v] = 1.0;
    ptdf.col(v) = solve_flows(g, removed, power);
    power[v] = 0.0;
  }
  return ptdf;
}

OracleChoice oracle_bruteforce(const Grid& grid, const TopologyTask& task, const SolveConfig& config) {
  OracleChoice choice;
  choice.metric = std::numeric_limits<double>::infinity();
  const double island_value = config.islanding_policy == IslandingPolicy::penalize
                                  ? config.islanding_penalty
                                  : std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < task.injection_sets.size(); ++j) {
    const auto topology = materialize(grid, task, task.injection_sets[j]);
    const auto flows = oracle_solve(topology);
    double worst = 0.0;
    auto scan = [&](const Eigen::VectorXd& f) {
      for (std::size_t l = 0; l < grid.branch_count(); ++l) {
        const auto& br = grid.branches()[l];
        if (br.monitored) worst = std::max(worst, std::abs(f[static_cast<Eigen::Index>(l)]) / br.rating);
      }
    };
    scan(flows.n0);
    for (std::size_t c = 0; c < flows.n1.size(); ++c) {
      if (flows.n1[c].size() == 0) {
        worst = std::max(worst, island_value);
      } else {
        scan(flows.n1[c]);
      }
    }
    choice.metrics.push_back(worst);
  }
  if (!choice.metrics.empty()) {
    choice.best_injection = select_injection(choice.metrics);
    choice.metric = choice.metrics[choice.best_injection];
  }
  return choice;
}

}  // namespace batchdc
