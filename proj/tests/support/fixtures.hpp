#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "batchdc/grid.hpp"

namespace fixtures {

using namespace batchdc;

inline Branch line(std::string id, NodeIndex f, NodeIndex t, double b = 1.0, double rating = 100.0) {
  return Branch{std::move(id), f, t, b, rating, true};
}

inline ContingencyCase single(std::string id, BranchIndex l) {
  return ContingencyCase{std::move(id), ContingencyKind::single_branch, {l}, kNoIndex};
}

// Nodes 0,1,2; e0=(0,1), e1=(1,2), e2=(0,2), b=1; slack 0; 90 MW at node 1.
// Node 1 is a substation holding e0, e1 and the generator.
inline GridData triangle_data() {
  GridData d;
  d.node_ids = {"n0", "n1", "n2"};
  d.branches = {line("e0", 0, 1), line("e1", 1, 2), line("e2", 0, 2)};
  d.injections = {{"g1", 1, 90.0}};
  d.slack = 0;
  d.contingencies = {single("c0", 0), single("c1", 1), single("c2", 2)};
  d.substations = {{1, {0, 1}, {0}}};
  return d;
}

inline Grid triangle() { return Grid(triangle_data()); }

inline Grid two_node() {
  GridData d;
  d.node_ids = {"a", "b"};
  d.branches = {line("e0", 0, 1)};
  d.injections = {{"load", 1, -10.0}};
  d.slack = 0;
  return Grid(std::move(d));
}

// 4-cycle 0-1-2-3-0 with unequal susceptances.
inline Grid four_cycle() {
  GridData d;
  d.node_ids = {"n0", "n1", "n2", "n3"};
  d.branches = {line("e0", 0, 1, 1.0), line("e1", 1, 2, 2.0), line("e2", 2, 3, 3.0), line("e3", 3, 0, 4.0)};
  d.injections = {{"g", 2, 50.0}, {"l", 3, -20.0}};
  d.slack = 0;
  return Grid(std::move(d));
}

struct SyntheticOptions {
  std::size_t nodes = 30;
  std::size_t chords = 20;
  std::size_t stubs = 3;          // pendant nodes (bridges)
  std::size_t substations = 6;
  std::size_t multi_outages = 4;
  bool generator_contingencies = true;
  std::uint64_t seed = 1;
};

// Ring with random chords (so most branches are not bridges), a few pendant
// nodes, random susceptances and ratings, loads everywhere and a handful of
// generators. Contingencies and substations come from designate_defaults.
inline Grid synthetic(const SyntheticOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> b_dist(1.0, 10.0), rating_dist(40.0, 200.0), load_dist(5.0, 40.0);
  GridData d;
  const std::size_t core = o.nodes - o.stubs;
  for (std::size_t v = 0; v < o.nodes; ++v) d.node_ids.push_back("v" + std::to_string(v));
  auto add = [&](std::size_t f, std::size_t t) {
    d.branches.push_back(line("l" + std::to_string(d.branches.size()), static_cast<NodeIndex>(f),
                              static_cast<NodeIndex>(t), b_dist(rng), rating_dist(rng)));
  };
  for (std::size_t v = 0; v < core; ++v) add(v, (v + 1) % core);
  std::uniform_int_distribution<std::size_t> pick(0, core - 1);
  for (std::size_t k = 0; k < o.chords; ++k) {
    std::size_t f = pick(rng), t = pick(rng);
    while (t == f) t = pick(rng);
    add(f, t);
  }
  for (std::size_t s = 0; s < o.stubs; ++s) add(pick(rng), core + s);
  double total_load = 0.0;
  for (std::size_t v = 0; v < o.nodes; ++v) {
    const double p = load_dist(rng);
    total_load += p;
    d.injections.push_back({"load" + std::to_string(v), static_cast<NodeIndex>(v), -p});
  }
  const std::size_t gens = std::max<std::size_t>(2, core / 5);
  for (std::size_t g = 0; g < gens; ++g) {
    d.injections.push_back({"gen" + std::to_string(g), static_cast<NodeIndex>(pick(rng)), total_load / gens});
  }
  d.slack = 0;
  DefaultsOptions defaults;
  defaults.generator_contingencies = o.generator_contingencies;
  defaults.multi_outages = o.multi_outages;
  defaults.substations = o.substations;
  return designate_defaults(Grid(std::move(d)), defaults);
}

inline Grid synthetic_small() { return synthetic({}); }

inline Grid synthetic_large() {
  SyntheticOptions o;
  o.nodes = 80;
  o.chords = 60;
  o.stubs = 6;
  o.substations = 10;
  o.multi_outages = 8;
  o.seed = 7;
  return synthetic(o);
}

}  // namespace fixtures
