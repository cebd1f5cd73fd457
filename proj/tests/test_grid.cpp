#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "batchdc/errors.hpp"
#include "batchdc/grid.hpp"
#include "batchdc/oracle.hpp"
#include "support/fixtures.hpp"

using namespace batchdc;

namespace {

const std::string two_bus = R"(
function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 135 1 1.05 0.95;
  2 1 40 0 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
  1 40 0 10 -10 1 100 1 100 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
)";

std::string with_reactance(const std::string& x) {
  std::string text = two_bus;
  text.replace(text.find("0.01 0.1"), 8, "0.01 " + x);
  return text;
}

std::filesystem::path data_dir() { return std::filesystem::path(BATCHDC_DATA_DIR); }

}  // namespace

TEST_CASE("MATPOWER two bus import") {
  const auto g = parse_matpower(two_bus);
  REQUIRE(g.node_count() == 2);
  REQUIRE(g.branch_count() == 1);
  CHECK(g.branches()[0].susceptance == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(g.branches()[0].rating == 100.0);
  CHECK(g.node_ids()[g.slack()] == "1");
  const auto power = g.nodal_power();
  CHECK(power[0] == 40.0);
  CHECK(power[1] == -40.0);
}

TEST_CASE("MATPOWER reactance handling") {
  CHECK_THROWS_AS(parse_matpower(with_reactance("0")), ValidationError);
  // Series compensation: the DC model uses |x|.
  CHECK(parse_matpower(with_reactance("-0.2")).branches()[0].susceptance == doctest::Approx(5.0));
}

TEST_CASE("MATPOWER HVDC lines are rejected") {
  const std::string text = two_bus + "mpc.dcline = [\n 1 2 1 10 10 0 0 1 1 0 100 -100 100 -100 100 0 0 0 0 0;\n];\n";
  CHECK_THROWS_AS(parse_matpower(text), UnsupportedFeature);
}

TEST_CASE("MATPOWER malformed input") {
  CHECK_THROWS_AS(parse_matpower("mpc.bus = [1 3 0;"), ParseError);
  CHECK_THROWS_AS(parse_matpower("function mpc = x\n"), ParseError);
}

TEST_CASE("case300 import size") {
  const auto g = import_matpower(data_dir() / "matpower" / "case300.m");
  CHECK(g.node_count() == 300);
  CHECK(g.branch_count() == 411);
}

TEST_CASE("case300 working copy") {
  const auto path = data_dir() / "case300.json";
  if (!std::filesystem::exists(path)) return;
  const auto g = load_native(path);
  CHECK(g.node_count() == 300);
  CHECK(g.branch_count() == 411);
  CHECK(g.contingencies().size() == 385);
  std::size_t pairs = 0;
  for (const auto& c : g.contingencies()) pairs += c.kind == ContingencyKind::multi_branch;
  CHECK(pairs == 7);
}

TEST_CASE("grid validation") {
  SUBCASE("non-positive susceptance") {
    auto d = fixtures::triangle_data();
    d.branches[1].susceptance = 0.0;
    CHECK_THROWS_AS(Grid{d}, ValidationError);
  }
  SUBCASE("non-positive rating") {
    auto d = fixtures::triangle_data();
    d.branches[0].rating = -1.0;
    CHECK_THROWS_AS(Grid{d}, ValidationError);
  }
  SUBCASE("disconnected grid") {
    auto d = fixtures::triangle_data();
    d.node_ids.push_back("island");
    CHECK_THROWS_AS(Grid{d}, ValidationError);
  }
  SUBCASE("unknown references") {
    auto d = fixtures::triangle_data();
    d.contingencies.push_back(fixtures::single("bad", 7));
    CHECK_THROWS_AS(Grid{d}, ValidationError);
  }
  SUBCASE("substation element not at its node") {
    auto d = fixtures::triangle_data();
    d.substations[0].branch_elements.push_back(2);
    CHECK_THROWS_AS(Grid{d}, ValidationError);
  }
  SUBCASE("lookups") {
    const auto g = fixtures::triangle();
    CHECK(g.node_index("n2") == 2);
    CHECK(g.branch_index("e1") == 1);
    CHECK(g.injection_index("g1") == 0);
    CHECK(g.substation_at(1) == 0);
    CHECK(g.substation_at(0) == kNoIndex);
    CHECK(g.split_node(0) == 3);
    CHECK(g.injection_slot_count() == 1);
    CHECK_THROWS_AS(g.node_index("nope"), ValidationError);
  }
}

TEST_CASE("native JSON round trip") {
  const auto g = fixtures::synthetic_small();
  const auto doc = to_native_json(g);
  const auto back = parse_native(doc);
  CHECK(to_native_json(back) == doc);
  CHECK(back.node_count() == g.node_count());
  CHECK(back.contingencies().size() == g.contingencies().size());

  const auto file = std::filesystem::temp_directory_path() / "batchdc_roundtrip.json";
  save_native(g, file);
  CHECK(to_native_json(load_native(file)) == doc);
  std::filesystem::remove(file);

  auto broken = doc;
  broken.erase("slack");
  CHECK_THROWS_AS(parse_native(broken), ParseError);
  CHECK_THROWS_AS(parse_native(nlohmann::json::array()), ParseError);
}

TEST_CASE("bridges") {
  const auto g = fixtures::synthetic_small();
  const auto bridges = find_bridges(g.node_count(), g.branches());
  // Only the pendant stubs are bridges: the rest sits on a ring.
  std::size_t count = 0;
  for (bool b : bridges) count += b;
  CHECK(count == 3);
  for (std::size_t l = g.branch_count() - 3; l < g.branch_count(); ++l) CHECK(bridges[l]);
  const auto two = fixtures::two_node();
  CHECK(find_bridges(2, two.branches()) == std::vector<bool>{true});
}

TEST_CASE("default designations") {
  const auto g = fixtures::synthetic_small();
  const auto bridges = find_bridges(g.node_count(), g.branches());
  std::size_t singles = 0, multis = 0, gens = 0;
  for (const auto& c : g.contingencies()) {
    switch (c.kind) {
      case ContingencyKind::single_branch: CHECK_FALSE(bridges[c.branches[0]]); ++singles; break;
      case ContingencyKind::multi_branch: CHECK(c.branches.size() == 2); ++multis; break;
      case ContingencyKind::injection: CHECK(g.injections()[c.injection].setpoint > 0.0); ++gens; break;
    }
  }
  CHECK(singles == g.branch_count() - 3);
  CHECK(multis == 4);
  CHECK(gens > 0);
  CHECK(g.substations().size() == 6);
  for (const auto& s : g.substations()) CHECK(s.branch_elements.size() >= 3);
}

TEST_CASE("stub replacement keeps the flows on the remaining branches") {
  // Substation at node 1 of a square with a two-node tail 1-4-5.
  GridData d;
  d.node_ids = {"n0", "n1", "n2", "n3", "n4", "n5"};
  d.branches = {fixtures::line("a", 0, 1, 2.0), fixtures::line("b", 1, 2, 3.0), fixtures::line("c", 2, 3, 1.0),
                fixtures::line("d", 3, 0, 5.0), fixtures::line("tail", 1, 4, 1.0), fixtures::line("tail2", 4, 5)};
  d.injections = {{"g", 2, 80.0}, {"l4", 4, -30.0}, {"l5", 5, -25.0}, {"l3", 3, -10.0}};
  d.slack = 0;
  d.contingencies = {fixtures::single("ca", 0), fixtures::single("cb", 1)};
  d.substations = {{1, {0, 1, 4}, {}}};
  const Grid full(d);
  const Grid reduced = replace_stub_branches(full);
  REQUIRE(reduced.node_count() == 4);
  REQUIRE(reduced.branch_count() == 4);
  REQUIRE(reduced.substations()[0].branch_elements.size() == 2);
  REQUIRE(reduced.substations()[0].injection_elements.size() == 2);
  CHECK(reduced.contingencies().size() == 2);

  // The tail rides along with the busbar of its stub branch.
  struct Case {
    std::vector<bool> full_branches, reduced_injections;
  };
  for (const Case& c : {Case{{false, false, false}, {false, false}}, Case{{true, false, true}, {true, true}},
                        Case{{false, true, false}, {false, false}}}) {
    TopologyTask full_task{{{0, c.full_branches}}, {}, {{}}};
    TopologyTask reduced_task{{{0, {c.full_branches[0], c.full_branches[1]}}}, {}, {c.reduced_injections}};
    const auto a = oracle_solve(materialize(full, full_task, full_task.injection_sets[0]));
    const auto b = oracle_solve(materialize(reduced, reduced_task, reduced_task.injection_sets[0]));
    for (BranchIndex l = 0; l < 4; ++l) CHECK(a.n0[l] == doctest::Approx(b.n0[l]).epsilon(1e-12));
    CHECK(a.islanding == b.islanding);
    for (std::size_t k = 0; k < 2; ++k)
      for (BranchIndex l = 0; l < (a.n1[k].size() > 0 ? 4 : 0); ++l) CHECK(a.n1[k][l] == doctest::Approx(b.n1[k][l]).epsilon(1e-12));
  }
}

TEST_CASE("stubs behind the slack stay") {
  GridData d = fixtures::triangle_data();
  d.node_ids.push_back("n3");
  d.branches.push_back(fixtures::line("s", 1, 3));
  d.slack = 3;
  d.substations[0].branch_elements.push_back(3);
  const Grid g(d);
  CHECK(replace_stub_branches(g).node_count() == 4);
}

TEST_CASE("static fold") {
  const auto g = fixtures::synthetic_small();
  const auto fold = static_injection_fold(g, movable_injections(g));
  std::vector<char> is_static(g.node_count(), 0);
  for (auto v : fold.static_nodes) is_static[v] = 1;
  CHECK(fold.static_nodes.size() + fold.effective_nodes.size() == g.node_count());
  CHECK_FALSE(is_static[g.slack()]);
  for (const auto& s : g.substations()) CHECK_FALSE(is_static[s.node]);
  for (const auto& c : g.contingencies())
    for (auto l : c.branches) {
      CHECK_FALSE(is_static[g.branches()[l].from]);
      CHECK_FALSE(is_static[g.branches()[l].to]);
    }
  for (auto i : movable_injections(g)) CHECK_FALSE(is_static[g.injections()[i].node]);
}
