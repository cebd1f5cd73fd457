#pragma once

// Test-side reference solves. Deliberately a different route from the
// library: dense Laplacian, full-pivot LU, nodes addressed by plain integers.

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "batchdc/batch_solver.hpp"
#include "batchdc/grid.hpp"

namespace dense {

struct Edge {
  int from, to;
  double b;
  bool present = true;
};

struct Network {
  int nodes = 0;
  int slack = 0;
  std::vector<Edge> edges;
};

inline Network from_grid(const batchdc::Grid& g) {
  Network n;
  n.nodes = static_cast<int>(g.node_count());
  n.slack = g.slack();
  for (const auto& br : g.branches()) n.edges.push_back({br.from, br.to, br.susceptance});
  return n;
}

// Grid after bus splits. Split nodes use the library's numbering
// (node_count + substation position) so columns line up; nodes = |V| + |S|
// and unsplit B nodes simply carry no edges.
inline Network split_network(const batchdc::Grid& g, const std::vector<batchdc::SplitAction>& splits) {
  Network n = from_grid(g);
  n.nodes = static_cast<int>(g.node_count() + g.substations().size());
  for (const auto& s : splits) {
    const auto& sub = g.substations()[s.substation];
    const int b = static_cast<int>(g.split_node(s.substation));
    for (std::size_t j = 0; j < sub.branch_elements.size(); ++j) {
      if (!s.branch_assignment[j]) continue;
      auto& e = n.edges[sub.branch_elements[j]];
      (e.from == sub.node ? e.from : e.to) = b;
    }
  }
  return n;
}

inline bool connected(const Network& n, const std::vector<char>& used_nodes) {
  std::vector<int> comp(n.nodes);
  for (int v = 0; v < n.nodes; ++v) comp[v] = v;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& e : n.edges) {
      if (!e.present) continue;
      const int m = std::min(comp[e.from], comp[e.to]);
      if (comp[e.from] != m || comp[e.to] != m) {
        comp[e.from] = comp[e.to] = m;
        changed = true;
      }
    }
  }
  int root = -1;
  for (int v = 0; v < n.nodes; ++v) {
    if (!used_nodes[v]) continue;
    if (root < 0) root = comp[v];
    if (comp[v] != root) return false;
  }
  return true;
}

// Nodes touched by at least one present edge, plus the slack.
inline std::vector<char> active_nodes(const Network& n) {
  std::vector<char> used(n.nodes, 0);
  used[n.slack] = 1;
  for (const auto& e : n.edges) {
    if (e.present) used[e.from] = used[e.to] = 1;
  }
  return used;
}

// Edge x node PTDF with zero columns for the slack and inactive nodes.
inline Eigen::MatrixXd ptdf(const Network& n) {
  const auto used = active_nodes(n);
  std::vector<int> idx(n.nodes, -1);
  int m = 0;
  for (int v = 0; v < n.nodes; ++v) {
    if (used[v] && v != n.slack) idx[v] = m++;
  }
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(m, m);
  for (const auto& e : n.edges) {
    if (!e.present) continue;
    const int f = idx[e.from], t = idx[e.to];
    if (f >= 0) lap(f, f) += e.b;
    if (t >= 0) lap(t, t) += e.b;
    if (f >= 0 && t >= 0) {
      lap(f, t) -= e.b;
      lap(t, f) -= e.b;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lap);
  const Eigen::MatrixXd inv = m > 0 ? Eigen::MatrixXd(lu.inverse()) : Eigen::MatrixXd();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n.edges.size()), n.nodes);
  for (std::size_t l = 0; l < n.edges.size(); ++l) {
    const auto& e = n.edges[l];
    if (!e.present) continue;
    for (int v = 0; v < n.nodes; ++v) {
      if (idx[v] < 0) continue;
      const double tf = idx[e.from] >= 0 ? inv(idx[e.from], idx[v]) : 0.0;
      const double tt = idx[e.to] >= 0 ? inv(idx[e.to], idx[v]) : 0.0;
      out(static_cast<Eigen::Index>(l), v) = e.b * (tf - tt);
    }
  }
  return out;
}

inline Eigen::VectorXd flows(const Network& n, const Eigen::VectorXd& nodal_power) {
  return ptdf(n) * nodal_power;
}

// Max |library PTDF - dense oracle| over every column of `p` that maps to a
// node. Reserved B columns of unsplit substations are compared with column A.
inline double max_ptdf_deviation(const batchdc::PtdfMatrix& p, const batchdc::Grid& g, const Eigen::MatrixXd& oracle,
                                 const std::vector<batchdc::SplitAction>& splits) {
  std::vector<char> split(g.substations().size(), 0);
  for (const auto& s : splits) {
    if (std::any_of(s.branch_assignment.begin(), s.branch_assignment.end(), [](bool b) { return b; }))
      split[s.substation] = 1;
  }
  double worst = 0.0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    int v = p.col_node[c];
    if (v == batchdc::kNoIndex) continue;
    if (v >= static_cast<int>(g.node_count())) {
      const auto s = static_cast<std::size_t>(v) - g.node_count();
      if (!split[s]) v = g.substations()[s].node;
    }
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      worst = std::max(worst, std::abs(p.values(r, c) - oracle(p.row_branch[r], v)));
  }
  return worst;
}

}  // namespace dense
