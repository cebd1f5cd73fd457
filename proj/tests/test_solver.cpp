#include <doctest.h>

#include <cmath>
#include <random>

#include "batchdc/batch_solver.hpp"
#include "batchdc/errors.hpp"
#include "batchdc/oracle.hpp"
#include "batchdc/task_gen.hpp"
#include "batchdc/validate.hpp"
#include "support/fixtures.hpp"

using namespace batchdc;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SolveConfig serial() {
  SolveConfig c;
  c.workers = 1;
  return c;
}

// Two 100 MW generators and a load on substation node 1 of a square.
Grid twin_generators() {
  GridData d;
  d.node_ids = {"n0", "n1", "n2", "n3"};
  d.branches = {fixtures::line("a", 0, 1), fixtures::line("b", 1, 2, 2.0), fixtures::line("c", 2, 3),
                fixtures::line("d", 3, 0, 3.0), fixtures::line("e", 1, 3, 1.5)};
  d.injections = {{"g1", 1, 100.0}, {"g2", 1, 100.0}, {"l", 2, -150.0}, {"l3", 3, -50.0}};
  d.slack = 0;
  d.contingencies = {fixtures::single("ca", 0), fixtures::single("cc", 2)};
  d.substations = {{1, {0, 1, 4}, {0, 1}}};
  return Grid(std::move(d));
}

}  // namespace

TEST_CASE("aggregation metric on enumerated arrays") {
  const Eigen::VectorXd ratings = vec({100, 100, 100});
  const Eigen::VectorXd n0 = vec({50, -80, 30});
  SolveConfig c;
  CHECK(agg_m(n0, {}, ratings, {}, c) == 0.8);
  CHECK(agg_m(n0, {vec({120, 0, 0})}, ratings, {false}, c) == 1.2);
  CHECK(agg_m(n0, {vec({10, 0, 0}), Eigen::VectorXd()}, ratings, {false, true}, c) == 10.0);
  c.islanding_penalty = 0.5;
  CHECK(agg_m(n0, {Eigen::VectorXd()}, ratings, {true}, c) == 0.8);
  c.islanding_policy = IslandingPolicy::error;
  CHECK(std::isinf(agg_m(n0, {Eigen::VectorXd()}, ratings, {true}, c)));
}

TEST_CASE("two-stage top-k on enumerated arrays") {
  const Eigen::VectorXd ratings = vec({100, 100, 100});
  SolveConfig c;
  c.topk_per_case = 1;
  c.topk_global = 2;
  const auto report = agg_i(vec({50, -80, 30}), {vec({90, 10, -95}), vec({20, -99, 5})}, ratings, c);
  REQUIRE(report.n0_worst.size() == 2);
  CHECK(report.n0_worst[0] == N0Entry{1, -80.0, 0.8});
  CHECK(report.n0_worst[1] == N0Entry{0, 50.0, 0.5});
  REQUIRE(report.n1_worst.size() == 2);
  CHECK(report.n1_worst[0].contingency == 1);
  CHECK(report.n1_worst[0].branch == 1);
  CHECK(report.n1_worst[0].flow == -99.0);
  CHECK(report.n1_worst[1].contingency == 0);
  CHECK(report.n1_worst[1].branch == 2);
  CHECK(report.n1_worst[1].relative_load == doctest::Approx(0.95).epsilon(1e-15));

  // Per-case top-k drops c0's second entry even though it beats c1's best.
  c.topk_global = 3;
  const auto pruned = agg_i(vec({0, 0, 0}), {vec({90, 80, 0}), vec({10, 0, 0})}, ratings, c);
  REQUIRE(pruned.n1_worst.size() == 2);
  CHECK(pruned.n1_worst[1] == N1Entry{1, 0, 10.0, 0.1});

  // Ties by contingency, then branch.
  c.topk_per_case = 2;
  const auto tied = agg_i(vec({40, -40, 0}), {vec({60, -60, 0}), vec({-60, 0, 0})}, ratings, c);
  CHECK(tied.n0_worst[0].branch == 0);
  CHECK(tied.n0_worst[1].branch == 1);
  CHECK(tied.n1_worst[0] == N1Entry{0, 0, 60.0, 0.6});
  CHECK(tied.n1_worst[1] == N1Entry{0, 1, -60.0, 0.6});
  CHECK(tied.n1_worst[2] == N1Entry{1, 0, -60.0, 0.6});
}

TEST_CASE("triangle split against the explicit grid") {
  const auto g = fixtures::triangle();
  const PreparedGrid prepared(g);
  // Busbar B of node 1 keeps e0 and, in the second candidate, the generator.
  const std::vector<TopologyTask> tasks{{{{0, {true, false}}}, {}, {{false}, {true}}}};
  ValidationOptions v;
  v.tolerance = 1e-9;
  const auto report = validate_against_oracle(prepared, tasks, serial(), v);
  CHECK(report.mismatches.empty());
  CHECK(report.max_deviation <= 1e-9);
  CHECK(report.flows_compared > 0);

  PtdfMatrix ws;
  const auto ctx = branch_stage(prepared, tasks[0], serial(), ws);
  // The split turns the triangle into the path B-n0-n2-A: every outage islands.
  CHECK(ctx.diagnostics.islanding_contingencies == std::vector<std::int32_t>{0, 1, 2});
  const auto flows = candidate_flows(prepared, ctx, {true});
  CHECK(flows.n0[ctx.ptdf->row(0)] == doctest::Approx(-90.0).epsilon(1e-12));
  CHECK(std::abs(flows.n0[ctx.ptdf->row(1)]) < 1e-12);
  CHECK(flows.n1[0].size() == 0);

  const auto result = solve_batch(prepared, tasks, serial())[0];
  CHECK(result.metric == 10.0);
  auto strict = serial();
  strict.islanding_policy = IslandingPolicy::error;
  const auto failed = solve_batch(prepared, tasks, strict)[0];
  CHECK_FALSE(failed.diagnostics.feasible);
  CHECK(std::isinf(failed.metric));
}

TEST_CASE("oracle equivalence on synthetic fixtures") {
  for (const auto& g : {fixtures::synthetic_small(), fixtures::synthetic_large()}) {
    for (bool reduce : {true, false}) {
      const PreparedGrid prepared(g, PrepareOptions{reduce});
      for (std::size_t disc : {0u, 1u, 2u}) {
        const auto tasks = generate_tasks(g, {12, 3, 6, disc, 40 + disc});
        ValidationOptions v;
        v.samples = 12;
        v.tolerance = 1e-9;
        auto config = serial();
        const auto report = validate_against_oracle(prepared, tasks, config, v);
        CHECK(report.mismatches.empty());
        CHECK(report.max_deviation <= 1e-9);
        config.multi_outage_method = MultiOutageMethod::sequential_lodf;
        CHECK(validate_against_oracle(prepared, tasks, config, v).max_deviation <= 1e-9);
      }
    }
  }
}

TEST_CASE("static reduction leaves flows unchanged") {
  const auto g = fixtures::synthetic_large();
  const PreparedGrid reduced(g), full(g, PrepareOptions{false});
  CHECK(reduced.base().cols() < full.base().cols());
  const auto tasks = generate_tasks(g, {20, 3, 4, 1, 5});
  PtdfMatrix wa, wb;
  for (const auto& task : tasks) {
    const auto a = branch_stage(reduced, task, serial(), wa);
    const auto b = branch_stage(full, task, serial(), wb);
    REQUIRE(a.ptdf != nullptr);
    REQUIRE(b.ptdf != nullptr);
    for (const auto& t_i : task.injection_sets) {
      const auto fa = candidate_flows(reduced, a, t_i);
      const auto fb = candidate_flows(full, b, t_i);
      CHECK((fa.n0 - fb.n0).cwiseAbs().maxCoeff() < 1e-9);
      for (std::size_t c = 0; c < fa.n1.size(); ++c) {
        REQUIRE(fa.n1[c].size() == fb.n1[c].size());
        if (fa.n1[c].size() > 0) CHECK((fa.n1[c] - fb.n1[c]).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
}

TEST_CASE("execution modes agree bit for bit") {
  const auto g = fixtures::synthetic_small();
  const PreparedGrid prepared(g);
  auto config = serial();
  const auto single = generate_tasks(g, {100, 3, 1, 0, 8});
  config.mode = ExecutionMode::metric_first;
  const auto m = solve_batch(prepared, single, config);
  config.mode = ExecutionMode::output_first;
  const auto o = solve_batch(prepared, single, config);
  config.mode = ExecutionMode::symmetric;
  const auto s = solve_batch(prepared, single, config);
  CHECK(m == o);
  CHECK(m == s);

  const auto multi = generate_tasks(g, {100, 3, 8, 1, 9});
  config.mode = ExecutionMode::metric_first;
  const auto mm = solve_batch(prepared, multi, config);
  config.mode = ExecutionMode::output_first;
  CHECK(mm == solve_batch(prepared, multi, config));
}

TEST_CASE("worker count and wave size do not change results") {
  const auto g = fixtures::synthetic_large();
  const PreparedGrid prepared(g);
  const auto tasks = generate_tasks(g, {60, 3, 4, 1, 12});
  const auto reference = solve_batch(prepared, tasks, serial());
  SolveConfig c;
  c.workers = 4;
  c.max_batch = 7;
  CHECK(solve_batch(prepared, tasks, c) == reference);
  c.workers = 0;
  c.max_batch = 4096;
  CHECK(solve_batch(prepared, tasks, c) == reference);
}

TEST_CASE("argmin over T_i matches the oracle bruteforce") {
  const auto g = fixtures::synthetic_small();
  const PreparedGrid prepared(g);
  const auto tasks = generate_tasks(g, {6, 2, 64, 0, 77});
  const auto results = solve_batch(prepared, tasks, serial());
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto choice = oracle_bruteforce(g, tasks[k], serial());
    CHECK(results[k].best_injection == choice.best_injection);
    CHECK(std::abs(results[k].metric - choice.metric) < 1e-9);
  }
}

TEST_CASE("first index wins ties") {
  // Swapping the two equal generators gives identical metrics.
  const auto g = twin_generators();
  const PreparedGrid prepared(g);
  const TopologyTask task{{{0, {true, false, false}}}, {}, {{true, false}, {false, true}, {true, true}, {false, true}}};
  for (auto mode : {ExecutionMode::metric_first, ExecutionMode::output_first}) {
    auto c = serial();
    c.mode = mode;
    const auto r = solve_batch(prepared, std::span(&task, 1), c)[0];
    const auto o = oracle_bruteforce(g, task, c);
    CHECK(o.metrics[0] == doctest::Approx(o.metrics[1]).epsilon(1e-12));
    CHECK(r.best_injection == o.best_injection);
  }
}

TEST_CASE("symmetric injection dedupe") {
  const auto g = twin_generators();
  const TopologyTask task{{{0, {true, false, false}}}, {}, {{false, false}, {true, false}, {false, true}, {true, true}}};
  const auto d = dedupe_symmetric_injections(task, g);
  CHECK(d.task.injection_sets.size() == 3);
  CHECK(d.original_index == std::vector<std::size_t>{0, 1, 3});

  // A contingency on one generator breaks the symmetry.
  GridData data = g.data();
  data.contingencies.push_back({"gg", ContingencyKind::injection, {}, 0});
  CHECK(dedupe_symmetric_injections(task, Grid(data)).task.injection_sets.size() == 4);

  // Deduped solves keep the metric.
  const PreparedGrid prepared(g);
  const auto full = solve_batch(prepared, std::span(&task, 1), serial())[0];
  const auto reduced = solve_batch(prepared, std::span(&d.task, 1), serial())[0];
  CHECK(full.metric == reduced.metric);
  CHECK(d.original_index[reduced.best_injection] == full.best_injection);
}

TEST_CASE("loadflow counting") {
  const auto g = fixtures::triangle();
  const PreparedGrid prepared(g);
  const TopologyTask plain{{}, {}, {{false}, {true}}};
  const auto r = solve_batch(prepared, std::span(&plain, 1), serial())[0];
  CHECK(counted_loadflows(r, plain, g) == 2 * (1 + 3));
  const TopologyTask islands{{{0, {true, false}}}, {}, {{false}}};
  const auto ri = solve_batch(prepared, std::span(&islands, 1), serial())[0];
  CHECK(counted_loadflows(ri, islands, g) == 1);
}

TEST_CASE("identity splits and disconnections") {
  const auto g = fixtures::triangle();
  const PreparedGrid prepared(g);
  const TopologyTask identity{{{0, {false, false}}}, {}, {{false}}};
  const TopologyTask none{{}, {}, {{false}}};
  const auto a = solve_batch(prepared, std::span(&identity, 1), serial())[0];
  const auto b = solve_batch(prepared, std::span(&none, 1), serial())[0];
  CHECK(a.diagnostics.identity_splits == std::vector<std::int32_t>{0});
  CHECK(a.metric == b.metric);
  CHECK(a.report == b.report);

  // Disconnecting e2 reproduces the hand-solved outage flows.
  const TopologyTask cut{{}, {2}, {{false}}};
  PtdfMatrix ws;
  const auto ctx = branch_stage(prepared, cut, serial(), ws);
  const auto flows = candidate_flows(prepared, ctx, {false});
  CHECK(flows.n0[ctx.ptdf->row(0)] == doctest::Approx(-90.0).epsilon(1e-12));
  CHECK(flows.n0[ctx.ptdf->row(2)] == 0.0);
  const auto r = solve_batch(prepared, std::span(&cut, 1), serial())[0];
  for (const auto& e : r.report.n0_worst) CHECK(e.branch != 2);
  for (const auto& e : r.report.n1_worst) CHECK(e.branch != 2);

  // Cutting e0 and e2 strands node 1's neighbours from the slack.
  const TopologyTask split_apart{{}, {0, 2}, {{false}}};
  const auto bad = solve_batch(prepared, std::span(&split_apart, 1), serial())[0];
  CHECK_FALSE(bad.diagnostics.feasible);
  CHECK_FALSE(bad.diagnostics.error.empty());
}

TEST_CASE("config validation") {
  const auto g = fixtures::triangle();
  const PreparedGrid prepared(g);
  auto check = [&](const TopologyTask& task, SolveConfig c = SolveConfig{}) {
    CHECK_THROWS_AS(solve_batch(prepared, std::span(&task, 1), c), ConfigError);
  };
  check({{}, {}, {}});
  check({{}, {}, {{false, true}}});
  check({{{0, {true}}}, {}, {{false}}});
  check({{{3, {true, false}}}, {}, {{false}}});
  check({{{0, {true, false}}, {0, {false, true}}}, {}, {{false}}});
  check({{}, {9}, {{false}}});
  check({{}, {1, 1}, {{false}}});
  SolveConfig symmetric;
  symmetric.mode = ExecutionMode::symmetric;
  check({{}, {}, {{false}, {true}}}, symmetric);
  SolveConfig zero;
  zero.topk_global = 0;
  check({{}, {}, {{false}}}, zero);
  CHECK_THROWS_AS(execution_mode_from_string("fast"), ConfigError);
  CHECK(execution_mode_from_string("metric-first") == ExecutionMode::metric_first);
  CHECK(islanding_policy_from_string("error") == IslandingPolicy::error);
}
