#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "batchdc/batch_solver.hpp"
#include "batchdc/errors.hpp"
#include "batchdc/grid.hpp"
#include "batchdc/oracle.hpp"
#include "batchdc/split_tree.hpp"
#include "batchdc/task_gen.hpp"
#include "batchdc/task_io.hpp"
#include "batchdc/validate.hpp"

using namespace batchdc;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct SolverFlags {
  std::string mode = "metric_first";
  std::string scheduler = "flat";
  std::size_t topk_per_case = 3;
  std::size_t topk_global = 10;
  int workers = 0;
  std::string islanding_policy = "penalize";
  std::string multi_outage_method = "modf";
  std::size_t max_batch = 4096;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--mode", mode, "output_first | metric_first | symmetric")->capture_default_str();
    cmd.add_option("--scheduler", scheduler, "flat | tree")->capture_default_str();
    cmd.add_option("--topk-per-case", topk_per_case)->capture_default_str();
    cmd.add_option("--topk-global", topk_global)->capture_default_str();
    cmd.add_option("--workers", workers, "OpenMP threads, 0 = runtime default")->capture_default_str();
    cmd.add_option("--islanding-policy", islanding_policy, "error | penalize")->capture_default_str();
    cmd.add_option("--multi-outage-method", multi_outage_method, "modf | sequential_lodf")->capture_default_str();
    cmd.add_option("--max-batch", max_batch)->capture_default_str();
  }

  SolveConfig config() const {
    SolveConfig c;
    c.mode = execution_mode_from_string(mode);
    c.topk_per_case = topk_per_case;
    c.topk_global = topk_global;
    c.workers = workers;
    c.islanding_policy = islanding_policy_from_string(islanding_policy);
    c.multi_outage_method = multi_outage_method_from_string(multi_outage_method);
    c.max_batch = max_batch;
    if (scheduler != "flat" && scheduler != "tree") throw ConfigError("unknown scheduler '" + scheduler + "'");
    return c;
  }

  bool tree() const { return scheduler == "tree"; }
};

struct RunOutcome {
  std::vector<SolveResult> results;
  SchedulerStats stats;
  double seconds = 0.0;
};

RunOutcome run(const PreparedGrid& prepared, std::span<const TopologyTask> tasks, const SolveConfig& config,
               bool tree) {
  RunOutcome out;
  const auto start = Clock::now();
  if (tree) {
    TreeOptions options;
    options.parallel_subtrees = config.workers != 1;
    out.results = execute_tree(prepared, build_tree(tasks), tasks, config, &out.stats, options);
  } else {
    out.results = solve_batch(prepared, tasks, config, &out.stats);
  }
  out.seconds = seconds_since(start);
  return out;
}

std::size_t count_loadflows(const RunOutcome& run, std::span<const TopologyTask> tasks, const Grid& grid) {
  std::size_t total = 0;
  for (std::size_t k = 0; k < tasks.size(); ++k) total += counted_loadflows(run.results[k], tasks[k], grid);
  return total;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw ParseError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  bool is_stdout() const { return !file_.is_open(); }

 private:
  std::ofstream file_;
};

// --- import ------------------------------------------------------------------

struct ImportCmd {
  std::string in, out;
  bool stub_reduce = false;
  std::size_t substations = 0;
  bool gen_outages = false;
  std::size_t multi_outages = 0;
  bool no_branch_outages = false;
  double default_rating = 100.0;

  int operator()() const {
    MatpowerOptions options;
    options.default_rating_mw = default_rating;
    Grid grid = import_matpower(in, options);
    DefaultsOptions defaults;
    defaults.branch_contingencies = !no_branch_outages;
    defaults.generator_contingencies = gen_outages;
    // Negative demand is not a generator.
    defaults.generator_filter = [](const Injection& i) { return i.id.starts_with("gen_"); };
    defaults.multi_outages = multi_outages;
    defaults.substations = substations;
    grid = designate_defaults(grid, defaults);
    if (stub_reduce) grid = replace_stub_branches(grid);
    save_native(grid, out);
    std::size_t pairs = 0;
    for (const auto& c : grid.contingencies()) pairs += c.kind == ContingencyKind::multi_branch;
    std::cout << json{{"nodes", grid.node_count()},
                      {"branches", grid.branch_count()},
                      {"injections", grid.injection_count()},
                      {"contingencies", grid.contingencies().size()},
                      {"multi_branch_contingencies", pairs},
                      {"substations", grid.substations().size()}}
                     .dump()
              << "\n";
    return kOk;
  }
};

// --- ptdf --------------------------------------------------------------------

struct PtdfCmd {
  std::string grid, out, sidecar;
  bool no_reduce = false;

  int operator()() const {
    const PreparedGrid prepared(load_native(grid), PrepareOptions{!no_reduce});
    const std::string meta = sidecar.empty() ? out + ".json" : sidecar;
    write_ptdf_dump(prepared.base(), prepared.grid(), out, meta);
    std::cout << json{{"rows", prepared.base().rows()}, {"cols", prepared.base().cols()}, {"binary", out},
                      {"sidecar", meta}}
                     .dump()
              << "\n";
    return kOk;
  }
};

// --- solve -------------------------------------------------------------------

struct SolveCmd {
  std::string grid, tasks, out;
  SolverFlags flags;

  int operator()() const {
    const auto config = flags.config();
    const PreparedGrid prepared(load_native(grid));
    const auto batch = load_tasks(tasks, prepared.grid());
    const auto outcome = run(prepared, batch, config, flags.tree());
    Output sink(out);
    write_results(sink.stream(), outcome.results, prepared.grid());
    const auto loadflows = count_loadflows(outcome, batch, prepared.grid());
    json summary{{"tasks", batch.size()},
                 {"loadflows", loadflows},
                 {"wall_time", outcome.seconds},
                 {"loadflows_per_second", outcome.seconds > 0 ? loadflows / outcome.seconds : 0.0},
                 {"scheduler", flags.scheduler},
                 {"mode", to_string(config.mode)},
                 {"bsdf_applications", outcome.stats.bsdf_applications},
                 {"peak_live_ptdfs", outcome.stats.peak_live_ptdfs}};
    (sink.is_stdout() ? std::cerr : std::cout) << summary.dump() << "\n";
    return kOk;
  }
};

// --- validate ----------------------------------------------------------------

struct ValidateCmd {
  std::string grid, tasks;
  std::size_t samples = 10;
  std::size_t max_injections = 8;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  SolverFlags flags;

  int operator()() const {
    const auto config = flags.config();
    const PreparedGrid prepared(load_native(grid));
    std::vector<TopologyTask> batch;
    if (!tasks.empty()) {
      batch = load_tasks(tasks, prepared.grid());
    } else {
      TaskGenOptions gen;
      gen.tasks = samples;
      gen.splits = 3;
      gen.injection_sets = max_injections;
      gen.seed = seed;
      batch = generate_tasks(prepared.grid(), gen);
    }
    ValidationOptions options;
    options.samples = samples;
    options.max_injections = max_injections;
    options.tolerance = tol;
    options.seed = seed;
    const auto report = validate_against_oracle(prepared, batch, config, options);
    const auto& g = prepared.grid();
    json doc{{"max_deviation", report.max_deviation},
             {"tolerance", tol},
             {"tasks_checked", report.tasks_checked},
             {"flows_compared", report.flows_compared},
             {"mismatches", report.mismatches},
             {"passed", report.passed}};
    json worst{{"task", report.worst_task < 0 ? json("identity") : json(report.worst_task)},
               {"injection", report.worst_injection},
               {"contingency", report.worst_contingency < 0 ? json("N-0")
                                                             : json(g.contingencies()[report.worst_contingency].id)},
               {"branch", report.worst_branch == kNoIndex ? json(nullptr) : json(g.branches()[report.worst_branch].id)}};
    doc["worst"] = worst;
    std::cout << doc.dump() << "\n";
    if (!report.passed) {
      std::cerr << "validation failed: max deviation " << report.max_deviation << " at (task " << worst["task"].dump()
                << ", contingency " << worst["contingency"].dump() << ", branch " << worst["branch"].dump() << ")\n";
      for (const auto& m : report.mismatches) std::cerr << "  " << m << "\n";
      return kFailed;
    }
    return kOk;
  }
};

// --- bench -------------------------------------------------------------------

struct BenchCmd {
  std::string grid, out;
  std::size_t tasks = 100;
  std::size_t ti = 100;
  std::size_t splits = 3;
  std::size_t disconnections = 0;
  double duration = 0.0;
  std::size_t repeat = 1;
  std::string baseline = "oracle";
  std::size_t oracle_tasks = 2;
  std::size_t oracle_injections = 2;
  std::uint64_t seed = 0;
  SolverFlags flags;

  int operator()() const {
    if (baseline != "oracle" && baseline != "none") throw ConfigError("unknown baseline '" + baseline + "'");
    if (repeat < 1) throw ConfigError("--repeat must be at least 1");
    const auto config = flags.config();
    const auto setup_start = Clock::now();
    const PreparedGrid prepared(load_native(grid));
    const double setup = seconds_since(setup_start);
    const auto& g = prepared.grid();
    TaskGenOptions gen{tasks, splits, ti, disconnections, seed};
    const auto batch = generate_tasks(g, gen);

    // Best of `repeat` runs, extended until `duration` seconds have passed.
    RunOutcome best;
    best.seconds = std::numeric_limits<double>::infinity();
    const auto bench_start = Clock::now();
    std::size_t runs = 0;
    while (runs < repeat || seconds_since(bench_start) < duration) {
      auto outcome = run(prepared, batch, config, flags.tree());
      if (outcome.seconds < best.seconds) best = std::move(outcome);
      ++runs;
    }
    const auto loadflows = count_loadflows(best, batch, g);
    const double rate = loadflows / best.seconds;

    json report{{"grid", grid},
                {"nodes", g.node_count()},
                {"branches", g.branch_count()},
                {"contingencies", g.contingencies().size()},
                {"tasks", batch.size()},
                {"ti", ti},
                {"splits", splits},
                {"disconnections", disconnections},
                {"seed", seed},
                {"scheduler", flags.scheduler},
                {"mode", to_string(config.mode)},
                {"workers", config.workers},
                {"runs", runs},
                {"setup_time", setup},
                {"wall_time", best.seconds},
                {"loadflows", loadflows},
                {"loadflows_per_second", rate},
                {"counting", "tasks x |T_i| x (1 + feasible contingencies)"},
                {"bsdf_applications", best.stats.bsdf_applications},
                {"peak_live_ptdfs", best.stats.peak_live_ptdfs}};

    if (baseline == "oracle") {
      std::size_t oracle_flows = 0;
      const auto start = Clock::now();
      for (std::size_t k = 0; k < std::min(oracle_tasks, batch.size()); ++k) {
        const auto& task = batch[k];
        for (std::size_t j = 0; j < std::min(oracle_injections, task.injection_sets.size()); ++j) {
          try {
            const auto flows = oracle_solve(materialize(g, task, task.injection_sets[j]));
            oracle_flows += 1 + g.contingencies().size() - flows.islanding.size();
          } catch (const DisconnectedTopology&) {
          }
        }
      }
      const double oracle_seconds = seconds_since(start);
      const double oracle_rate = oracle_seconds > 0 ? oracle_flows / oracle_seconds : 0.0;
      report["oracle"] = {{"loadflows", oracle_flows},
                          {"wall_time", oracle_seconds},
                          {"loadflows_per_second", oracle_rate}};
      report["speedup_vs_oracle"] = oracle_rate > 0 ? rate / oracle_rate : 0.0;
    }
    Output sink(out);
    sink.stream() << report.dump(2) << "\n";
    return kOk;
  }
};

// --- gen-tasks ---------------------------------------------------------------

struct GenTasksCmd {
  std::string grid, out;
  TaskGenOptions options;

  int operator()() const {
    const auto g = load_native(grid);
    const auto batch = generate_tasks(g, options);
    Output sink(out);
    write_tasks(sink.stream(), batch, g);
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch DC loadflow engine for topology candidates"};
  app.require_subcommand(1);

  ImportCmd import_cmd;
  auto* imp = app.add_subcommand("import", "Convert a MATPOWER case to the native JSON grid");
  imp->add_option("input", import_cmd.in, "MATPOWER .m file")->required();
  imp->add_option("output", import_cmd.out, "native grid JSON")->required();
  imp->add_flag("--stub-reduce", import_cmd.stub_reduce, "replace stub branches at substations");
  imp->add_option("--substations", import_cmd.substations, "designate N highest-degree nodes as splittable");
  imp->add_flag("--gen-outages", import_cmd.gen_outages, "add one contingency per generator");
  imp->add_option("--multi-outages", import_cmd.multi_outages, "add N two-branch contingencies");
  imp->add_flag("--no-branch-outages", import_cmd.no_branch_outages, "skip single-branch contingencies");
  imp->add_option("--default-rating", import_cmd.default_rating, "MW rating for rateA = 0")->capture_default_str();

  PtdfCmd ptdf_cmd;
  auto* ptdf = app.add_subcommand("ptdf", "Dump the base PTDF matrix");
  ptdf->add_option("grid", ptdf_cmd.grid)->required();
  ptdf->add_option("--out", ptdf_cmd.out, "binary float64 output")->required();
  ptdf->add_option("--sidecar", ptdf_cmd.sidecar, "metadata JSON (default <out>.json)");
  ptdf->add_flag("--no-reduce", ptdf_cmd.no_reduce, "keep every node column");

  SolveCmd solve_cmd;
  auto* solve = app.add_subcommand("solve", "Solve a batch of topology tasks");
  solve->add_option("grid", solve_cmd.grid)->required();
  solve->add_option("tasks", solve_cmd.tasks, "JSON Lines task file")->required();
  solve->add_option("--out", solve_cmd.out, "JSON Lines results (default stdout)");
  solve_cmd.flags.add_to(*solve);

  ValidateCmd validate_cmd;
  auto* validate = app.add_subcommand("validate", "Compare the solver with the refactorizing oracle");
  validate->add_option("grid", validate_cmd.grid)->required();
  validate->add_option("tasks", validate_cmd.tasks, "task file (default: random tasks)");
  validate->add_option("--samples", validate_cmd.samples)->capture_default_str();
  validate->add_option("--max-injections", validate_cmd.max_injections)->capture_default_str();
  validate->add_option("--tol", validate_cmd.tol)->capture_default_str();
  validate->add_option("--seed", validate_cmd.seed)->capture_default_str();
  validate_cmd.flags.add_to(*validate);

  BenchCmd bench_cmd;
  auto* bench = app.add_subcommand("bench", "Throughput on random tasks");
  bench->add_option("grid", bench_cmd.grid)->required();
  bench->add_option("--tasks", bench_cmd.tasks)->capture_default_str();
  bench->add_option("--ti", bench_cmd.ti, "|T_i| per task")->capture_default_str();
  bench->add_option("--splits", bench_cmd.splits)->capture_default_str();
  bench->add_option("--disconnections", bench_cmd.disconnections)->capture_default_str();
  bench->add_option("--duration", bench_cmd.duration, "keep repeating for at least this many seconds");
  bench->add_option("--repeat", bench_cmd.repeat, "runs; the fastest is reported")->capture_default_str();
  bench->add_option("--baseline", bench_cmd.baseline, "oracle | none")->capture_default_str();
  bench->add_option("--oracle-tasks", bench_cmd.oracle_tasks)->capture_default_str();
  bench->add_option("--oracle-injections", bench_cmd.oracle_injections)->capture_default_str();
  bench->add_option("--seed", bench_cmd.seed)->capture_default_str();
  bench->add_option("--out", bench_cmd.out, "report path (default stdout)");
  bench_cmd.flags.add_to(*bench);

  GenTasksCmd gen_cmd;
  auto* gen = app.add_subcommand("gen-tasks", "Write seeded random tasks as JSON Lines");
  gen->add_option("grid", gen_cmd.grid)->required();
  gen->add_option("--tasks", gen_cmd.options.tasks)->capture_default_str();
  gen->add_option("--ti", gen_cmd.options.injection_sets)->capture_default_str();
  gen->add_option("--splits", gen_cmd.options.splits)->capture_default_str();
  gen->add_option("--disconnections", gen_cmd.options.disconnections)->capture_default_str();
  gen->add_option("--seed", gen_cmd.options.seed)->capture_default_str();
  gen->add_option("--out", gen_cmd.out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (imp->parsed()) return import_cmd();
    if (ptdf->parsed()) return ptdf_cmd();
    if (solve->parsed()) return solve_cmd();
    if (validate->parsed()) return validate_cmd();
    if (bench->parsed()) return bench_cmd();
    if (gen->parsed()) return gen_cmd();
  } catch (const ParseError& e) {
    std::cerr << "ParseError: " << e.what() << "\n";
  } catch (const ValidationError& e) {
    std::cerr << "ValidationError: " << e.what() << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "ConfigError: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kUsage;
}
