#include <algorithm>
#include <numeric>
#include <queue>
#include <set>

#include "batchdc/errors.hpp"
#include "batchdc/grid.hpp"
#include "union_find.hpp"

namespace batchdc {

namespace {

struct Adjacency {
  // CSR: for node v, entries [offset[v], offset[v+1]) hold (neighbour, branch).
  std::vector<std::size_t> offset;
  std::vector<std::pair<NodeIndex, BranchIndex>> entries;
};

Adjacency build_adjacency(std::size_t node_count, const std::vector<Branch>& branches) {
  Adjacency adj;
  adj.offset.assign(node_count + 1, 0);
  for (const auto& br : branches) {
    ++adj.offset[br.from + 1];
    ++adj.offset[br.to + 1];
  }
  std::partial_sum(adj.offset.begin(), adj.offset.end(), adj.offset.begin());
  adj.entries.resize(adj.offset.back());
  auto cursor = adj.offset;
  for (BranchIndex l = 0; l < static_cast<BranchIndex>(branches.size()); ++l) {
    adj.entries[cursor[branches[l].from]++] = {branches[l].to, l};
    adj.entries[cursor[branches[l].to]++] = {branches[l].from, l};
  }
  return adj;
}

bool connected_without(std::size_t node_count, const std::vector<Branch>& branches,
                       const std::vector<BranchIndex>& removed) {
  detail::UnionFind uf(node_count);
  for (BranchIndex l = 0; l < static_cast<BranchIndex>(branches.size()); ++l) {
    if (std::find(removed.begin(), removed.end(), l) != removed.end()) continue;
    uf.unite(branches[l].from, branches[l].to);
  }
  return uf.components() == 1;
}

}  // namespace

std::vector<bool> find_bridges(std::size_t node_count, const std::vector<Branch>& branches) {
  // Iterative Tarjan low-link over a multigraph: parallel branches are
  // distinguished by branch index, so a doubled line is never a bridge.
  const auto adj = build_adjacency(node_count, branches);
  std::vector<bool> bridge(branches.size(), false);
  std::vector<int> disc(node_count, -1), low(node_count, 0);
  int timer = 0;

  struct Frame {
    NodeIndex node;
    BranchIndex via;
    std::size_t next;
  };
  std::vector<Frame> stack;
  for (std::size_t root = 0; root < node_count; ++root) {
    if (disc[root] != -1) continue;
    disc[root] = low[root] = timer++;
    stack.push_back({static_cast<NodeIndex>(root), kNoIndex, adj.offset[root]});
    while (!stack.empty()) {
      auto& top = stack.back();
      const NodeIndex v = top.node;
      if (top.next < adj.offset[v + 1]) {
        const auto [w, l] = adj.entries[top.next++];
        if (l == top.via) continue;
        if (disc[w] == -1) {
          disc[w] = low[w] = timer++;
          stack.push_back({w, l, adj.offset[w]});
        } else {
          low[v] = std::min(low[v], disc[w]);
        }
      } else {
        const BranchIndex via = top.via;
        stack.pop_back();
        if (!stack.empty()) {
          const NodeIndex parent = stack.back().node;
          low[parent] = std::min(low[parent], low[v]);
          if (low[v] > disc[parent]) bridge[via] = true;
        }
      }
    }
  }
  return bridge;
}

Grid designate_defaults(const Grid& grid, const DefaultsOptions& options) {
  GridData data = grid.data();
  const auto& branches = data.branches;
  const auto bridges = find_bridges(data.node_ids.size(), branches);

  std::vector<ContingencyCase> cases;
  if (options.branch_contingencies) {
    for (BranchIndex l = 0; l < static_cast<BranchIndex>(branches.size()); ++l) {
      if (!bridges[l])
        cases.push_back({"c_" + branches[l].id, ContingencyKind::single_branch, {l}, kNoIndex});
    }
  }
  if (options.multi_outages > 0) {
    // Pairs of non-bridge branches meeting at a node (a stand-in for
    // three-winding transformers), scanned in node order.
    const auto adj = build_adjacency(data.node_ids.size(), branches);
    std::set<std::pair<BranchIndex, BranchIndex>> seen;
    for (std::size_t v = 0; v < data.node_ids.size() && seen.size() < options.multi_outages; ++v) {
      std::vector<BranchIndex> incident;
      for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
        if (!bridges[adj.entries[k].second]) incident.push_back(adj.entries[k].second);
      }
      std::sort(incident.begin(), incident.end());
      bool taken = false;
      for (std::size_t a = 0; a < incident.size() && !taken; ++a) {
        for (std::size_t b = a + 1; b < incident.size() && !taken; ++b) {
          std::pair pair{incident[a], incident[b]};
          if (seen.count(pair)) continue;
          if (!connected_without(data.node_ids.size(), branches, {pair.first, pair.second})) continue;
          seen.insert(pair);
          cases.push_back({"m_" + branches[pair.first].id + "+" + branches[pair.second].id,
                           ContingencyKind::multi_branch,
                           {pair.first, pair.second},
                           kNoIndex});
          taken = true;
        }
      }
    }
  }
  if (options.generator_contingencies) {
    for (InjectionIndex i = 0; i < static_cast<InjectionIndex>(data.injections.size()); ++i) {
      const auto& inj = data.injections[i];
      if (inj.setpoint > 0.0 && (!options.generator_filter || options.generator_filter(inj)))
        cases.push_back({"g_" + data.injections[i].id, ContingencyKind::injection, {}, i});
    }
  }
  if (options.branch_contingencies || options.generator_contingencies || options.multi_outages > 0)
    data.contingencies = std::move(cases);

  if (options.substations > 0) {
    std::vector<std::size_t> degree(data.node_ids.size(), 0);
    for (const auto& br : branches) {
      ++degree[br.from];
      ++degree[br.to];
    }
    std::vector<NodeIndex> order(data.node_ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](NodeIndex a, NodeIndex b) { return degree[a] > degree[b]; });
    data.substations.clear();
    for (NodeIndex v : order) {
      if (data.substations.size() == options.substations || degree[v] < 3) break;
      SplittableSubstation sub;
      sub.node = v;
      for (BranchIndex l = 0; l < static_cast<BranchIndex>(branches.size()); ++l) {
        if (branches[l].from == v || branches[l].to == v) sub.branch_elements.push_back(l);
      }
      for (InjectionIndex i = 0; i < static_cast<InjectionIndex>(data.injections.size()); ++i) {
        if (data.injections[i].node == v) sub.injection_elements.push_back(i);
      }
      data.substations.push_back(std::move(sub));
    }
    std::sort(data.substations.begin(), data.substations.end(),
              [](const auto& a, const auto& b) { return a.node < b.node; });
  }
  return Grid(std::move(data));
}

Grid replace_stub_branches(const Grid& grid) {
  const GridData& in = grid.data();
  const std::size_t n = in.node_ids.size();
  const auto bridges = find_bridges(n, in.branches);
  const auto adj = build_adjacency(n, in.branches);

  std::vector<bool> node_removed(n, false), branch_removed(in.branches.size(), false);
  std::vector<NodeIndex> rehome(n, kNoIndex);

  for (const auto& sub : in.substations) {
    for (BranchIndex stub : sub.branch_elements) {
      if (!bridges[stub] || branch_removed[stub]) continue;
      const auto& br = in.branches[stub];
      const NodeIndex far = br.from == sub.node ? br.to : br.from;
      // Collect the component behind the stub.
      std::vector<NodeIndex> component{far};
      std::vector<bool> visited(n, false);
      visited[far] = visited[sub.node] = true;
      bool keep = false;
      for (std::size_t head = 0; head < component.size(); ++head) {
        const NodeIndex v = component[head];
        if (v == in.slack || grid.substation_at(v) != kNoIndex) keep = true;
        for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
          const auto [w, l] = adj.entries[k];
          if (l == stub || visited[w]) continue;
          visited[w] = true;
          component.push_back(w);
        }
      }
      if (keep) continue;
      branch_removed[stub] = true;
      for (NodeIndex v : component) {
        node_removed[v] = true;
        rehome[v] = sub.node;
      }
    }
  }
  if (std::none_of(branch_removed.begin(), branch_removed.end(), [](bool b) { return b; }))
    return grid;

  for (std::size_t l = 0; l < in.branches.size(); ++l) {
    if (node_removed[in.branches[l].from] || node_removed[in.branches[l].to]) branch_removed[l] = true;
  }

  GridData out;
  std::vector<NodeIndex> node_map(n, kNoIndex);
  for (std::size_t v = 0; v < n; ++v) {
    if (node_removed[v]) continue;
    node_map[v] = static_cast<NodeIndex>(out.node_ids.size());
    out.node_ids.push_back(in.node_ids[v]);
  }
  std::vector<BranchIndex> branch_map(in.branches.size(), kNoIndex);
  for (std::size_t l = 0; l < in.branches.size(); ++l) {
    if (branch_removed[l]) continue;
    branch_map[l] = static_cast<BranchIndex>(out.branches.size());
    Branch br = in.branches[l];
    br.from = node_map[br.from];
    br.to = node_map[br.to];
    out.branches.push_back(std::move(br));
  }
  out.injections = in.injections;
  std::vector<std::vector<InjectionIndex>> moved_into(n);
  for (InjectionIndex i = 0; i < static_cast<InjectionIndex>(out.injections.size()); ++i) {
    auto& inj = out.injections[i];
    if (node_removed[inj.node]) {
      moved_into[rehome[inj.node]].push_back(i);
      inj.node = rehome[inj.node];
    }
    inj.node = node_map[inj.node];
  }
  out.slack = node_map[in.slack];
  for (const auto& sub : in.substations) {
    SplittableSubstation s;
    s.node = node_map[sub.node];
    for (auto l : sub.branch_elements) {
      if (branch_map[l] != kNoIndex) s.branch_elements.push_back(branch_map[l]);
    }
    s.injection_elements = sub.injection_elements;
    for (auto i : moved_into[sub.node]) s.injection_elements.push_back(i);
    out.substations.push_back(std::move(s));
  }
  for (const auto& c : in.contingencies) {
    ContingencyCase cc = c;
    bool dropped = false;
    for (auto& l : cc.branches) {
      if (branch_map[l] == kNoIndex) dropped = true;
      l = branch_map[l];
    }
    if (!dropped) out.contingencies.push_back(std::move(cc));
  }
  return Grid(std::move(out));
}

std::vector<InjectionIndex> movable_injections(const Grid& grid) {
  std::vector<InjectionIndex> movable;
  for (const auto& sub : grid.substations())
    movable.insert(movable.end(), sub.injection_elements.begin(), sub.injection_elements.end());
  for (const auto& c : grid.contingencies()) {
    if (c.kind == ContingencyKind::injection) movable.push_back(c.injection);
  }
  std::sort(movable.begin(), movable.end());
  movable.erase(std::unique(movable.begin(), movable.end()), movable.end());
  return movable;
}

StaticFold static_injection_fold(const Grid& grid, const std::vector<InjectionIndex>& movable) {
  std::vector<bool> keep(grid.node_count(), false);
  keep[grid.slack()] = true;
  auto keep_branch = [&](BranchIndex l) {
    keep[grid.branches()[l].from] = true;
    keep[grid.branches()[l].to] = true;
  };
  for (const auto& sub : grid.substations()) {
    keep[sub.node] = true;
    for (auto l : sub.branch_elements) keep_branch(l);
  }
  for (const auto& c : grid.contingencies()) {
    for (auto l : c.branches) keep_branch(l);
  }
  for (auto i : movable) keep[grid.injections().at(i).node] = true;

  StaticFold fold;
  for (NodeIndex v = 0; v < static_cast<NodeIndex>(grid.node_count()); ++v)
    (keep[v] ? fold.effective_nodes : fold.static_nodes).push_back(v);
  return fold;
}

}  // namespace batchdc
