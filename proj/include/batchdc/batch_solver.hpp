#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchdc/grid.hpp"
#include "batchdc/ptdf.hpp"

namespace batchdc {

/// Busbar assignment of one element set: false = busbar A, true = busbar B.
using Assignment = std::vector<bool>;

struct SplitAction {
  std::int32_t substation = kNoIndex;  // position in Grid::substations()
  Assignment branch_assignment;

  friend bool operator==(const SplitAction&, const SplitAction&) = default;
};

/// One candidate: branch topology t_b (as split actions), remedial
/// disconnections t_d and the injection topology set T_i. Each t_i spans the
/// concatenated injection elements of all substations, in grid order.
struct TopologyTask {
  std::vector<SplitAction> splits;
  std::vector<BranchIndex> disconnections;
  std::vector<Assignment> injection_sets;
};

/// Splits sorted by (substation, assignment bits read as an integer).
std::vector<SplitAction> canonical_splits(std::vector<SplitAction> splits);

/// Strict weak order used for canonical split ordering.
bool split_less(const SplitAction& a, const SplitAction& b);

enum class ExecutionMode { output_first, metric_first, symmetric };
enum class IslandingPolicy { error, penalize };
enum class MultiOutageMethod { modf, sequential_lodf };

std::string_view to_string(ExecutionMode mode);
std::string_view to_string(IslandingPolicy policy);
std::string_view to_string(MultiOutageMethod method);
ExecutionMode execution_mode_from_string(std::string_view text);
IslandingPolicy islanding_policy_from_string(std::string_view text);
MultiOutageMethod multi_outage_method_from_string(std::string_view text);

struct SolveConfig {
  ExecutionMode mode = ExecutionMode::metric_first;
  std::size_t topk_per_case = 3;
  std::size_t topk_global = 10;
  IslandingPolicy islanding_policy = IslandingPolicy::penalize;
  double islanding_penalty = 10.0;  // relative load assigned to islanding contingencies
  std::size_t max_batch = 4096;     // tasks per parallel wave
  MultiOutageMethod multi_outage_method = MultiOutageMethod::modf;
  int workers = 0;                  // 0 = OpenMP default
  bool dedupe_symmetric = false;
};

/// Throws ConfigError on inconsistent settings or tasks.
void validate_config(const SolveConfig& config, const Grid& grid, std::span<const TopologyTask> tasks);

struct N0Entry {
  BranchIndex branch;
  double flow;
  double relative_load;
  friend bool operator==(const N0Entry&, const N0Entry&) = default;
};

struct N1Entry {
  std::int32_t contingency;  // position in Grid::contingencies()
  BranchIndex branch;
  double flow;
  double relative_load;
  friend bool operator==(const N1Entry&, const N1Entry&) = default;
};

/// Worst branch results, sorted by relative load descending, ties by
/// (contingency, branch) ascending.
struct SparseReport {
  std::vector<N0Entry> n0_worst;
  std::vector<N1Entry> n1_worst;
  friend bool operator==(const SparseReport&, const SparseReport&) = default;
};

struct Diagnostics {
  bool feasible = true;
  std::string error;                              // why the task is infeasible
  std::vector<std::int32_t> islanding_contingencies;
  std::vector<std::int32_t> identity_splits;      // splits with an empty move set
  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct SolveResult {
  double metric = std::numeric_limits<double>::infinity();
  std::size_t best_injection = 0;
  SparseReport report;
  Diagnostics diagnostics;
  friend bool operator==(const SolveResult&, const SolveResult&) = default;
};

/// Per-grid data shared by every task: the base PTDF (static nodes folded,
/// one column reserved per substation) and the injection slot layout.
struct PrepareOptions {
  bool reduce_static = true;
};

class PreparedGrid {
 public:
  explicit PreparedGrid(Grid grid, PrepareOptions options = {});

  const Grid& grid() const noexcept { return grid_; }
  const PtdfMatrix& base() const noexcept { return base_; }

  struct Slot {
    InjectionIndex injection;
    std::int32_t substation;
    double setpoint;
  };
  const std::vector<Slot>& slots() const noexcept { return slots_; }

  /// Column power of everything that never leaves its node (static column = 1).
  const Eigen::VectorXd& fixed_power() const noexcept { return fixed_power_; }
  /// Rows [0, monitored_rows()) are the monitored branches.
  std::size_t monitored_rows() const noexcept { return monitored_rows_; }
  const Eigen::VectorXd& ratings() const noexcept { return ratings_; }
  /// 1 / rating per monitored row.
  const Eigen::VectorXd& inverse_ratings() const noexcept { return inverse_ratings_; }
  /// Slot position of an injection, or -1 when it is not a substation element.
  std::int32_t slot_of(InjectionIndex i) const noexcept { return slot_of_injection_[i]; }
  /// PTDF column of slot `s` on busbar A (false) or B (true).
  std::int32_t slot_col(std::size_t s, bool on_b) const noexcept { return on_b ? slot_col_b_[s] : slot_col_a_[s]; }
  /// PTDF column of injection `i` under assignment `t_i`.
  std::int32_t injection_col(InjectionIndex i, const Assignment& t_i) const;

 private:
  Grid grid_;
  PtdfMatrix base_;
  std::vector<Slot> slots_;
  std::vector<std::int32_t> slot_of_injection_;
  std::vector<std::int32_t> slot_col_a_, slot_col_b_;
  Eigen::VectorXd fixed_power_;
  Eigen::VectorXd ratings_;
  Eigen::VectorXd inverse_ratings_;
  std::size_t monitored_rows_ = 0;
};

enum class OutageStatus : std::uint8_t { ok, islanding };

/// Result of the branch module for one task.
struct BranchContext {
  /// PTDF after splits and disconnections. Points either at `owned` or at a
  /// matrix owned by the scheduler.
  const PtdfMatrix* ptdf = nullptr;
  std::unique_ptr<PtdfMatrix> owned;

  Eigen::MatrixXd lodf;                    // rows x single-branch contingencies
  std::vector<std::int32_t> lodf_row;      // outaged row per LODF column
  std::vector<ModfMatrix> modf;            // one per multi-branch contingency
  Eigen::VectorXd static_flows;            // PTDF * fixed_power

  /// Per grid contingency: which LODF column / MODF matrix it uses.
  std::vector<std::int32_t> plan_index;
  std::vector<OutageStatus> status;

  std::vector<char> disconnected;          // per row
  Diagnostics diagnostics;
};

/// Applies `splits` (in the given order) to `ptdf` in place and returns the
/// number of BSDF applications. Throws SingularSplit / DegenerateSplit.
std::size_t apply_splits(const PreparedGrid& prepared, PtdfMatrix& ptdf, std::span<const SplitAction> splits,
                         Diagnostics* diagnostics = nullptr);

/// Applies the remedial disconnections t_d in place (MODF or sequential LODF
/// per config). Throws IslandingError.
void apply_disconnections(PtdfMatrix& ptdf, std::span<const BranchIndex> disconnections, const SolveConfig& config);

/// Branch module steps 4 to 6 on a PTDF that already carries t_b and t_d.
/// `ptdf` must outlive the returned context.
BranchContext prepare_contingencies(const PreparedGrid& prepared, const PtdfMatrix& ptdf, const SolveConfig& config);

/// Steps 3 to 6 on a PTDF that already carries the splits. Copies the matrix
/// only when the task disconnects branches. Failures end up in diagnostics.
BranchContext finish_branch_stage(const PreparedGrid& prepared, const PtdfMatrix& split_ptdf,
                                  const TopologyTask& task, const SolveConfig& config,
                                  Diagnostics split_diagnostics = {});

/// Full branch module (steps 2 to 6) from the base PTDF. `workspace` receives
/// the updated PTDF and must outlive the returned context.
BranchContext branch_stage(const PreparedGrid& prepared, const TopologyTask& task, const SolveConfig& config,
                           PtdfMatrix& workspace, std::size_t* bsdf_applications = nullptr);

/// Flows for one injection candidate: N-0 over all rows and N-1 per
/// contingency (empty vector for islanding contingencies).
struct CandidateFlows {
  Eigen::VectorXd n0;
  std::vector<Eigen::VectorXd> n1;
};

CandidateFlows candidate_flows(const PreparedGrid& prepared, const BranchContext& ctx, const Assignment& t_i);

/// agg_m on materialized flows: max |flow| / rating over monitored rows of N-0
/// and every N-1 case, islanding cases contributing the penalty (or +inf).
double agg_m(const PreparedGrid& prepared, const BranchContext& ctx, const CandidateFlows& flows,
             const SolveConfig& config);

/// Same as agg_m on plain arrays: `n1` rows are cases, `islanding` flags cases.
double agg_m(const Eigen::VectorXd& n0, const std::vector<Eigen::VectorXd>& n1, const Eigen::VectorXd& ratings,
             const std::vector<bool>& islanding, const SolveConfig& config);

/// Two-stage top-k: per-case top-k, concatenated, then a global top-k.
/// Entry r of each vector belongs to branch r; empty `n1` cases are skipped.
SparseReport agg_i(const Eigen::VectorXd& n0, const std::vector<Eigen::VectorXd>& n1,
                   const Eigen::VectorXd& ratings, const SolveConfig& config);

/// agg_i on materialized flows of a task; disconnected and outaged branches
/// are never reported.
SparseReport agg_i(const PreparedGrid& prepared, const BranchContext& ctx, const CandidateFlows& flows,
                   const SolveConfig& config);

/// Relative gap under which two metrics count as equal. Different solve
/// routes agree only to round-off, so exact comparison would make the
/// argmin depend on the route when a constraint binds for several t_i.
inline constexpr double kMetricTieTolerance = 1e-9;

/// Lowest index whose metric is within kMetricTieTolerance of the minimum.
std::size_t select_injection(std::span<const double> metrics);

/// Injection module: bruteforce over T_i under `config.mode`.
SolveResult injection_stage(const PreparedGrid& prepared, const BranchContext& ctx, const TopologyTask& task,
                            const SolveConfig& config);

/// Counters reported by the schedulers.
struct SchedulerStats {
  std::size_t bsdf_applications = 0;
  std::size_t peak_live_ptdfs = 0;
};

/// Flat scheduler: every task processed independently, in parallel over
/// tasks with OpenMP. Output order follows input order and does not depend
/// on the worker count.
std::vector<SolveResult> solve_batch(const PreparedGrid& prepared, std::span<const TopologyTask> tasks,
                                     const SolveConfig& config, SchedulerStats* stats = nullptr);

/// Flat solve of one task; `workspace` is reused between calls.
SolveResult solve_task(const PreparedGrid& prepared, const TopologyTask& task, const SolveConfig& config,
                       PtdfMatrix& workspace, std::size_t* bsdf_applications = nullptr);

/// Removes injection assignments that only swap equal-setpoint injections
/// of the same substation (and equal contingency status). `original_index[k]` is the position in the input
/// T_i of the k-th kept assignment.
struct DedupedTask {
  TopologyTask task;
  std::vector<std::size_t> original_index;
};
DedupedTask dedupe_symmetric_injections(const TopologyTask& task, const Grid& grid);

/// Number of N-0/N-1 loadflows a solve represents: |T_i| * (1 + feasible cases).
std::size_t counted_loadflows(const SolveResult& result, const TopologyTask& task, const Grid& grid);

}  // namespace batchdc
