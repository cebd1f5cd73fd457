#include "batchdc/batch_solver.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <omp.h>

#include "batchdc/errors.hpp"

namespace batchdc {

// --- task helpers --------------------------------------------------------------

bool split_less(const SplitAction& a, const SplitAction& b) {
  if (a.substation != b.substation) return a.substation < b.substation;
  // Bits as an unsigned integer, element 0 most significant. Equal length
  // within one substation, so a lexicographic compare is the same thing.
  return std::lexicographical_compare(a.branch_assignment.begin(), a.branch_assignment.end(),
                                      b.branch_assignment.begin(), b.branch_assignment.end());
}

std::vector<SplitAction> canonical_splits(std::vector<SplitAction> splits) {
  std::stable_sort(splits.begin(), splits.end(), split_less);
  return splits;
}

std::string_view to_string(ExecutionMode mode) {
  switch (mode) {
    case ExecutionMode::output_first: return "output_first";
    case ExecutionMode::metric_first: return "metric_first";
    case ExecutionMode::symmetric: return "symmetric";
  }
  return "?";
}

std::string_view to_string(IslandingPolicy policy) {
  return policy == IslandingPolicy::error ? "error" : "penalize";
}

std::string_view to_string(MultiOutageMethod method) {
  return method == MultiOutageMethod::modf ? "modf" : "sequential_lodf";
}

namespace {

std::string normalized(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

}  // namespace

ExecutionMode execution_mode_from_string(std::string_view text) {
  const auto t = normalized(text);
  if (t == "output_first") return ExecutionMode::output_first;
  if (t == "metric_first") return ExecutionMode::metric_first;
  if (t == "symmetric") return ExecutionMode::symmetric;
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

IslandingPolicy islanding_policy_from_string(std::string_view text) {
  if (text == "error") return IslandingPolicy::error;
  if (text == "penalize") return IslandingPolicy::penalize;
  throw ConfigError("unknown islanding policy '" + std::string(text) + "'");
}

MultiOutageMethod multi_outage_method_from_string(std::string_view text) {
  const auto t = normalized(text);
  if (t == "modf") return MultiOutageMethod::modf;
  if (t == "sequential_lodf") return MultiOutageMethod::sequential_lodf;
  throw ConfigError("unknown multi-outage method '" + std::string(text) + "'");
}

// --- PreparedGrid ----------------------------------------------------------------

PreparedGrid::PreparedGrid(Grid grid, PrepareOptions options) : grid_(std::move(grid)) {
  base_ = compute_ptdf(grid_);
  const auto nodal = grid_.nodal_power();
  if (options.reduce_static) {
    const auto fold = static_injection_fold(grid_, movable_injections(grid_));
    base_ = reduce_static(base_, grid_, fold.static_nodes, nodal);
  }
  reserve_split_columns(base_, grid_);

  slot_of_injection_.assign(grid_.injection_count(), -1);
  const auto& subs = grid_.substations();
  for (std::size_t s = 0; s < subs.size(); ++s) {
    for (auto i : subs[s].injection_elements) {
      slot_of_injection_[i] = static_cast<std::int32_t>(slots_.size());
      slots_.push_back({i, static_cast<std::int32_t>(s), grid_.injections()[i].setpoint});
      slot_col_a_.push_back(base_.col(subs[s].node));
      slot_col_b_.push_back(base_.col(grid_.split_node(s)));
    }
  }

  std::vector<double> fixed(grid_.node_count(), 0.0);
  for (InjectionIndex i = 0; i < static_cast<InjectionIndex>(grid_.injection_count()); ++i) {
    if (slot_of_injection_[i] < 0) fixed[grid_.injections()[i].node] += grid_.injections()[i].setpoint;
  }
  // Power at folded nodes is already part of the static column.
  fixed_power_ = column_power(base_, fixed);

  monitored_rows_ = grid_.monitored().size();
  ratings_.resize(static_cast<Eigen::Index>(monitored_rows_));
  for (std::size_t r = 0; r < monitored_rows_; ++r)
    ratings_[static_cast<Eigen::Index>(r)] = grid_.branches()[base_.row_branch[r]].rating;
  inverse_ratings_ = ratings_.cwiseInverse();
}

std::int32_t PreparedGrid::injection_col(InjectionIndex i, const Assignment& t_i) const {
  const auto s = slot_of_injection_[i];
  if (s >= 0) return slot_col(static_cast<std::size_t>(s), t_i[static_cast<std::size_t>(s)]);
  return base_.col(grid_.injections()[i].node);
}

// --- config validation -------------------------------------------------------------

void validate_config(const SolveConfig& config, const Grid& grid, std::span<const TopologyTask> tasks) {
  if (config.topk_per_case < 1 || config.topk_global < 1) throw ConfigError("top-k sizes must be at least 1");
  if (config.max_batch < 1) throw ConfigError("max_batch must be at least 1");
  if (config.workers < 0) throw ConfigError("workers must be >= 0");
  if (!std::isfinite(config.islanding_penalty) || config.islanding_penalty < 0.0)
    throw ConfigError("islanding penalty must be finite and non-negative");

  const auto& subs = grid.substations();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    const std::string where = "task " + std::to_string(t) + ": ";
    std::set<std::int32_t> seen_subs;
    for (const auto& split : task.splits) {
      if (split.substation < 0 || split.substation >= static_cast<std::int32_t>(subs.size()))
        throw ConfigError(where + "split references unknown substation " + std::to_string(split.substation));
      if (!seen_subs.insert(split.substation).second)
        throw ConfigError(where + "substation " + std::to_string(split.substation) + " is split twice");
      if (split.branch_assignment.size() != subs[split.substation].branch_elements.size())
        throw ConfigError(where + "branch assignment length " + std::to_string(split.branch_assignment.size()) +
                          " does not match substation " + std::to_string(split.substation));
    }
    std::set<BranchIndex> seen_branches;
    for (auto l : task.disconnections) {
      if (l < 0 || l >= static_cast<BranchIndex>(grid.branch_count()))
        throw ConfigError(where + "disconnection references unknown branch " + std::to_string(l));
      if (!seen_branches.insert(l).second)
        throw ConfigError(where + "branch '" + grid.branches()[l].id + "' is disconnected twice");
    }
    if (task.injection_sets.empty()) throw ConfigError(where + "injection set T_i is empty");
    for (const auto& t_i : task.injection_sets) {
      if (t_i.size() != grid.injection_slot_count())
        throw ConfigError(where + "injection assignment length " + std::to_string(t_i.size()) + ", expected " +
                          std::to_string(grid.injection_slot_count()));
    }
    if (config.mode == ExecutionMode::symmetric && task.injection_sets.size() != 1)
      throw ConfigError(where + "symmetric mode requires |T_i| = 1");
  }
}

namespace {

void check_disconnectable(const PtdfMatrix& ptdf, std::span<const BranchIndex> disconnections) {
  for (auto l : disconnections) {
    if (l < 0 || l >= static_cast<BranchIndex>(ptdf.row_of_branch.size()) || ptdf.row_of_branch[l] < 0)
      throw ConfigError("branch " + std::to_string(l) + " has no PTDF row and cannot be disconnected");
    const auto r = ptdf.row_of_branch[l];
    if (ptdf.row_from_col[r] < 0 || ptdf.row_to_col[r] < 0)
      throw ConfigError("branch " + std::to_string(l) +
                        " has an endpoint folded into the static column and cannot be disconnected");
  }
}

}  // namespace

// --- branch module ----------------------------------------------------------------

std::size_t apply_splits(const PreparedGrid& prepared, PtdfMatrix& ptdf, std::span<const SplitAction> splits,
                         Diagnostics* diagnostics) {
  std::size_t applied = 0;
  for (const auto& split : splits) {
    const auto update = compute_bsdf(ptdf, prepared.grid(), split.substation, split.branch_assignment);
    apply_bsdf_in_place(ptdf, update);
    ++applied;
    if (update.identity && diagnostics) diagnostics->identity_splits.push_back(split.substation);
  }
  return applied;
}

void apply_disconnections(PtdfMatrix& ptdf, std::span<const BranchIndex> disconnections, const SolveConfig& config) {
  if (disconnections.empty()) return;
  if (config.multi_outage_method == MultiOutageMethod::sequential_lodf) {
    apply_outages_sequential_in_place(ptdf, disconnections);
  } else {
    apply_modf_in_place(ptdf, compute_modf(ptdf, disconnections));
  }
}

BranchContext prepare_contingencies(const PreparedGrid& prepared, const PtdfMatrix& ptdf, const SolveConfig& config) {
  BranchContext ctx;
  ctx.ptdf = &ptdf;
  const auto& cases = prepared.grid().contingencies();
  ctx.plan_index.assign(cases.size(), -1);
  ctx.status.assign(cases.size(), OutageStatus::ok);

  std::size_t singles = 0;
  for (const auto& c : cases) singles += c.kind == ContingencyKind::single_branch;
  ctx.lodf.resize(ptdf.rows(), static_cast<Eigen::Index>(singles));

  Eigen::Index next = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& cc = cases[c];
    if (cc.kind == ContingencyKind::single_branch) {
      const auto k = cc.branches.front();
      const auto r = ptdf.row(k);
      const auto f = ptdf.row_from_col[r], t = ptdf.row_to_col[r];
      if (f < 0 || t < 0) throw InvalidReduction("contingency '" + cc.id + "' has a folded endpoint");
      auto col = ctx.lodf.col(next);
      col = ptdf.values.col(f) - ptdf.values.col(t);
      const double denominator = 1.0 - col[r];
      if (std::abs(denominator) < kIslandingTolerance) {
        ctx.status[c] = OutageStatus::islanding;
        col.setZero();
      } else {
        col /= denominator;
        col[r] = -1.0;
      }
      ctx.lodf_row.push_back(r);
      ctx.plan_index[c] = static_cast<std::int32_t>(next++);
    } else if (cc.kind == ContingencyKind::multi_branch) {
      try {
        ctx.modf.push_back(compute_modf(ptdf, cc.branches));
        ctx.plan_index[c] = static_cast<std::int32_t>(ctx.modf.size() - 1);
      } catch (const IslandingError&) {
        ctx.status[c] = OutageStatus::islanding;
      }
    }
    if (ctx.status[c] == OutageStatus::islanding)
      ctx.diagnostics.islanding_contingencies.push_back(static_cast<std::int32_t>(c));
  }
  if (!ctx.diagnostics.islanding_contingencies.empty() && config.islanding_policy == IslandingPolicy::error) {
    ctx.diagnostics.feasible = false;
    ctx.diagnostics.error = "contingency '" + cases[ctx.diagnostics.islanding_contingencies.front()].id +
                            "' islands the grid";
  }

  ctx.static_flows = ptdf.values * prepared.fixed_power();
  ctx.disconnected.resize(ptdf.rows());
  for (Eigen::Index r = 0; r < ptdf.rows(); ++r) ctx.disconnected[r] = !ptdf.row_in_service[r];
  return ctx;
}

namespace {

BranchContext infeasible_context(Diagnostics diagnostics, std::string error) {
  BranchContext ctx;
  ctx.diagnostics = std::move(diagnostics);
  ctx.diagnostics.feasible = false;
  ctx.diagnostics.error = std::move(error);
  return ctx;
}

void merge_split_diagnostics(BranchContext& ctx, Diagnostics split_diagnostics) {
  ctx.diagnostics.identity_splits = std::move(split_diagnostics.identity_splits);
}

}  // namespace

BranchContext finish_branch_stage(const PreparedGrid& prepared, const PtdfMatrix& split_ptdf,
                                  const TopologyTask& task, const SolveConfig& config,
                                  Diagnostics split_diagnostics) {
  try {
    if (task.disconnections.empty()) {
      auto ctx = prepare_contingencies(prepared, split_ptdf, config);
      merge_split_diagnostics(ctx, std::move(split_diagnostics));
      return ctx;
    }
    check_disconnectable(split_ptdf, task.disconnections);
    auto owned = std::make_unique<PtdfMatrix>(split_ptdf);
    apply_disconnections(*owned, task.disconnections, config);
    auto ctx = prepare_contingencies(prepared, *owned, config);
    ctx.owned = std::move(owned);
    merge_split_diagnostics(ctx, std::move(split_diagnostics));
    return ctx;
  } catch (const IslandingError& e) {
    return infeasible_context(std::move(split_diagnostics), std::string("disconnections: ") + e.what());
  }
}

BranchContext branch_stage(const PreparedGrid& prepared, const TopologyTask& task, const SolveConfig& config,
                           PtdfMatrix& workspace, std::size_t* bsdf_applications) {
  workspace = prepared.base();
  Diagnostics diagnostics;
  try {
    const auto splits = canonical_splits(task.splits);
    const auto applied = apply_splits(prepared, workspace, splits, &diagnostics);
    if (bsdf_applications) *bsdf_applications += applied;
    check_disconnectable(workspace, task.disconnections);
    apply_disconnections(workspace, task.disconnections, config);
  } catch (const SingularSplit& e) {
    return infeasible_context(std::move(diagnostics), e.what());
  } catch (const DegenerateSplit& e) {
    return infeasible_context(std::move(diagnostics), e.what());
  } catch (const IslandingError& e) {
    return infeasible_context(std::move(diagnostics), std::string("disconnections: ") + e.what());
  }
  auto ctx = prepare_contingencies(prepared, workspace, config);
  merge_split_diagnostics(ctx, std::move(diagnostics));
  return ctx;
}

// --- flows -------------------------------------------------------------------------

namespace {

// N-0 from scratch in fixed slot order; every path that needs p_n0 for a
// candidate goes through here, which keeps modes bit-identical.
void candidate_n0(const PreparedGrid& prepared, const BranchContext& ctx, const Assignment& t_i,
                  Eigen::Ref<Eigen::VectorXd> out) {
  out = ctx.static_flows;
  const auto& slots = prepared.slots();
  const auto& values = ctx.ptdf->values;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s].setpoint != 0.0) out += values.col(prepared.slot_col(s, t_i[s])) * slots[s].setpoint;
  }
}

void multi_outage(const Eigen::Ref<const Eigen::VectorXd>& p0, const ModfMatrix& modf, Eigen::VectorXd& out) {
  out = p0;
  for (std::size_t i = 0; i < modf.outage_rows.size(); ++i) {
    const double x = p0[modf.outage_rows[i]];
    out += modf.values.col(static_cast<Eigen::Index>(i)) * x;
  }
  for (auto r : modf.outage_rows) out[r] = 0.0;
}

constexpr std::size_t kCandidateBlock = 8;

// Metrics of the candidates whose N-0 flows are the columns of `p0`. Same
// element arithmetic as candidate_flows(); contingencies run in the outer
// loop so each LODF column is read once per block.
void candidate_metrics(const PreparedGrid& prepared, const BranchContext& ctx, std::span<const Assignment> sets,
                       const Eigen::MatrixXd& p0, Eigen::VectorXd& scratch, const SolveConfig& config,
                       double* out) {
  const auto m = static_cast<Eigen::Index>(prepared.monitored_rows());
  const auto n = static_cast<Eigen::Index>(sets.size());
  const auto& inv = prepared.inverse_ratings();
  for (Eigen::Index b = 0; b < n; ++b) out[b] = (p0.col(b).head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff();
  const auto& cases = prepared.grid().contingencies();
  const auto& values = ctx.ptdf->values;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    if (ctx.status[c] == OutageStatus::islanding) {
      const double penalty = config.islanding_policy == IslandingPolicy::penalize
                                 ? config.islanding_penalty
                                 : std::numeric_limits<double>::infinity();
      for (Eigen::Index b = 0; b < n; ++b) out[b] = std::max(out[b], penalty);
      continue;
    }
    switch (cases[c].kind) {
      case ContingencyKind::single_branch: {
        const auto j = ctx.plan_index[c];
        const auto lodf = ctx.lodf.col(j).head(m);
        const auto r = ctx.lodf_row[j];
        for (Eigen::Index b = 0; b < n; ++b) {
          const double s = p0(r, b);
          out[b] = std::max(out[b], ((p0.col(b).head(m) + lodf * s).cwiseAbs().cwiseProduct(inv)).maxCoeff());
        }
        break;
      }
      case ContingencyKind::multi_branch:
        for (Eigen::Index b = 0; b < n; ++b) {
          multi_outage(p0.col(b), ctx.modf[ctx.plan_index[c]], scratch);
          out[b] = std::max(out[b], (scratch.head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff());
        }
        break;
      case ContingencyKind::injection: {
        const auto i = cases[c].injection;
        const double sp = prepared.grid().injections()[i].setpoint;
        for (Eigen::Index b = 0; b < n; ++b) {
          const auto col = values.col(prepared.injection_col(i, sets[static_cast<std::size_t>(b)])).head(m);
          out[b] = std::max(out[b], ((p0.col(b).head(m) - col * sp).cwiseAbs().cwiseProduct(inv)).maxCoeff());
        }
        break;
      }
    }
  }
}

}  // namespace

CandidateFlows candidate_flows(const PreparedGrid& prepared, const BranchContext& ctx, const Assignment& t_i) {
  CandidateFlows flows;
  flows.n0.resize(ctx.ptdf->rows());
  candidate_n0(prepared, ctx, t_i, flows.n0);
  const auto& p0 = flows.n0;
  const auto& cases = prepared.grid().contingencies();
  flows.n1.resize(cases.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    if (ctx.status[c] == OutageStatus::islanding) continue;
    auto& out = flows.n1[c];
    switch (cases[c].kind) {
      case ContingencyKind::single_branch: {
        const auto j = ctx.plan_index[c];
        const auto r = ctx.lodf_row[j];
        out = p0 + ctx.lodf.col(j) * p0[r];
        out[r] = 0.0;
        break;
      }
      case ContingencyKind::multi_branch:
        multi_outage(p0, ctx.modf[ctx.plan_index[c]], out);
        break;
      case ContingencyKind::injection: {
        const auto i = cases[c].injection;
        const double sp = prepared.grid().injections()[i].setpoint;
        out = p0 - ctx.ptdf->values.col(prepared.injection_col(i, t_i)) * sp;
        break;
      }
    }
  }
  return flows;
}

// --- aggregation -------------------------------------------------------------------

double agg_m(const Eigen::VectorXd& n0, const std::vector<Eigen::VectorXd>& n1, const Eigen::VectorXd& ratings,
             const std::vector<bool>& islanding, const SolveConfig& config) {
  const Eigen::VectorXd inv = ratings.cwiseInverse();
  const auto m = ratings.size();
  double worst = m > 0 ? (n0.head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff() : 0.0;
  for (std::size_t c = 0; c < n1.size(); ++c) {
    if (c < islanding.size() && islanding[c]) {
      worst = std::max(worst, config.islanding_policy == IslandingPolicy::penalize
                                  ? config.islanding_penalty
                                  : std::numeric_limits<double>::infinity());
      continue;
    }
    if (n1[c].size() > 0 && m > 0) worst = std::max(worst, (n1[c].head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff());
  }
  return worst;
}

double agg_m(const PreparedGrid& prepared, const BranchContext& ctx, const CandidateFlows& flows,
             const SolveConfig& config) {
  const auto m = static_cast<Eigen::Index>(prepared.monitored_rows());
  const auto& inv = prepared.inverse_ratings();
  double worst = (flows.n0.head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff();
  for (std::size_t c = 0; c < flows.n1.size(); ++c) {
    if (ctx.status[c] == OutageStatus::islanding) {
      worst = std::max(worst, config.islanding_policy == IslandingPolicy::penalize
                                  ? config.islanding_penalty
                                  : std::numeric_limits<double>::infinity());
      continue;
    }
    worst = std::max(worst, (flows.n1[c].head(m).cwiseAbs().cwiseProduct(inv)).maxCoeff());
  }
  return worst;
}

namespace {

bool n0_before(const N0Entry& a, const N0Entry& b) {
  if (a.relative_load != b.relative_load) return a.relative_load > b.relative_load;
  return a.branch < b.branch;
}

bool n1_before(const N1Entry& a, const N1Entry& b) {
  if (a.relative_load != b.relative_load) return a.relative_load > b.relative_load;
  if (a.contingency != b.contingency) return a.contingency < b.contingency;
  return a.branch < b.branch;
}

// Sorted buffer of the k best entries under a strict total order.
template <class Entry, class Less>
class TopK {
 public:
  TopK(std::size_t k, Less less) : k_(k), less_(less) { items_.reserve(k + 1); }

  // Cheap pre-check on the relative load alone.
  bool may_enter(double relative_load) const {
    return items_.size() < k_ || relative_load >= items_.back().relative_load;
  }
  void offer(const Entry& e) {
    if (items_.size() == k_ && !less_(e, items_.back())) return;
    items_.insert(std::upper_bound(items_.begin(), items_.end(), e, less_), e);
    if (items_.size() > k_) items_.pop_back();
  }
  void clear() { items_.clear(); }
  const std::vector<Entry>& items() const { return items_; }
  std::vector<Entry> take() { return std::move(items_); }

 private:
  std::size_t k_;
  Less less_;
  std::vector<Entry> items_;
};

// excluded(c, r): c = -1 for N-0.
template <class Excluded>
SparseReport build_report(const Eigen::VectorXd& n0, const std::vector<Eigen::VectorXd>& n1,
                          const Eigen::VectorXd& inv, const std::vector<BranchIndex>* row_branch,
                          const SolveConfig& config, Excluded excluded) {
  SparseReport report;
  const auto m = inv.size();
  auto branch_of = [&](Eigen::Index r) {
    return row_branch ? (*row_branch)[r] : static_cast<BranchIndex>(r);
  };
  TopK<N0Entry, decltype(&n0_before)> top0(config.topk_global, n0_before);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double rel = std::abs(n0[r]) * inv[r];
    if (!top0.may_enter(rel) || excluded(-1, r)) continue;
    top0.offer({branch_of(r), n0[r], rel});
  }
  report.n0_worst = top0.take();

  TopK<N1Entry, decltype(&n1_before)> global(config.topk_global, n1_before), per_case(config.topk_per_case, n1_before);
  for (std::size_t c = 0; c < n1.size(); ++c) {
    if (n1[c].size() == 0) continue;
    per_case.clear();
    const auto cc = static_cast<std::int32_t>(c);
    for (Eigen::Index r = 0; r < m; ++r) {
      const double rel = std::abs(n1[c][r]) * inv[r];
      if (!per_case.may_enter(rel) || excluded(cc, r)) continue;
      per_case.offer({cc, branch_of(r), n1[c][r], rel});
    }
    for (const auto& e : per_case.items()) global.offer(e);
  }
  report.n1_worst = global.take();
  return report;
}

}  // namespace

SparseReport agg_i(const Eigen::VectorXd& n0, const std::vector<Eigen::VectorXd>& n1,
                   const Eigen::VectorXd& ratings, const SolveConfig& config) {
  const Eigen::VectorXd inv = ratings.cwiseInverse();
  return build_report(n0, n1, inv, nullptr, config, [](std::int32_t, Eigen::Index) { return false; });
}

SparseReport agg_i(const PreparedGrid& prepared, const BranchContext& ctx, const CandidateFlows& flows,
                   const SolveConfig& config) {
  const auto& cases = prepared.grid().contingencies();
  std::vector<std::vector<char>> outaged(cases.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    if (cases[c].branches.empty()) continue;
    for (auto l : cases[c].branches) {
      const auto r = ctx.ptdf->row_of_branch[l];
      if (r < static_cast<std::int32_t>(prepared.monitored_rows())) {
        if (outaged[c].empty()) outaged[c].assign(prepared.monitored_rows(), 0);
        outaged[c][r] = 1;
      }
    }
  }
  return build_report(flows.n0, flows.n1, prepared.inverse_ratings(), &ctx.ptdf->row_branch, config,
                      [&](std::int32_t c, Eigen::Index r) {
                        if (ctx.disconnected[r]) return true;
                        return c >= 0 && !outaged[c].empty() && outaged[c][r] != 0;
                      });
}

// --- injection module --------------------------------------------------------------

SolveResult injection_stage(const PreparedGrid& prepared, const BranchContext& ctx, const TopologyTask& task,
                            const SolveConfig& config) {
  SolveResult result;
  result.diagnostics = ctx.diagnostics;
  if (!ctx.diagnostics.feasible) return result;

  const auto& sets = task.injection_sets;
  if (config.mode == ExecutionMode::symmetric) {
    const auto flows = candidate_flows(prepared, ctx, sets.front());
    result.metric = agg_m(prepared, ctx, flows, config);
    result.best_injection = 0;
    result.report = agg_i(prepared, ctx, flows, config);
    return result;
  }

  std::vector<double> metrics(sets.size());
  std::vector<SparseReport> reports;
  if (config.mode == ExecutionMode::output_first) reports.resize(sets.size());
  Eigen::MatrixXd p0(ctx.ptdf->rows(), static_cast<Eigen::Index>(std::min(sets.size(), kCandidateBlock)));
  Eigen::VectorXd scratch(ctx.ptdf->rows());
  for (std::size_t begin = 0; begin < sets.size(); begin += kCandidateBlock) {
    const std::size_t count = std::min(kCandidateBlock, sets.size() - begin);
    const std::span<const Assignment> block(sets.data() + begin, count);
    for (std::size_t b = 0; b < count; ++b) candidate_n0(prepared, ctx, block[b], p0.col(static_cast<Eigen::Index>(b)));
    candidate_metrics(prepared, ctx, block, p0.leftCols(static_cast<Eigen::Index>(count)), scratch, config,
                      metrics.data() + begin);
    if (config.mode == ExecutionMode::output_first) {
      for (std::size_t b = 0; b < count; ++b)
        reports[begin + b] = agg_i(prepared, ctx, candidate_flows(prepared, ctx, block[b]), config);
    }
  }
  result.best_injection = select_injection(metrics);
  result.metric = metrics[result.best_injection];
  if (config.mode == ExecutionMode::output_first) {
    result.report = std::move(reports[result.best_injection]);
  } else {
    const auto flows = candidate_flows(prepared, ctx, sets[result.best_injection]);
    result.report = agg_i(prepared, ctx, flows, config);
  }
  return result;
}

std::size_t select_injection(std::span<const double> metrics) {
  if (metrics.empty()) return 0;
  const double best = *std::min_element(metrics.begin(), metrics.end());
  if (!std::isfinite(best)) return static_cast<std::size_t>(std::min_element(metrics.begin(), metrics.end()) - metrics.begin());
  const double limit = best + kMetricTieTolerance * std::max(1.0, std::abs(best));
  for (std::size_t j = 0; j < metrics.size(); ++j) {
    if (metrics[j] <= limit) return j;
  }
  return 0;
}

// --- schedulers ----------------------------------------------------------------------

SolveResult solve_task(const PreparedGrid& prepared, const TopologyTask& task, const SolveConfig& config,
                       PtdfMatrix& workspace, std::size_t* bsdf_applications) {
  if (config.dedupe_symmetric) {
    const auto deduped = dedupe_symmetric_injections(task, prepared.grid());
    SolveConfig inner = config;
    inner.dedupe_symmetric = false;
    auto result = solve_task(prepared, deduped.task, inner, workspace, bsdf_applications);
    result.best_injection = deduped.original_index[result.best_injection];
    return result;
  }
  const auto ctx = branch_stage(prepared, task, config, workspace, bsdf_applications);
  return injection_stage(prepared, ctx, task, config);
}

std::vector<SolveResult> solve_batch(const PreparedGrid& prepared, std::span<const TopologyTask> tasks,
                                     const SolveConfig& config, SchedulerStats* stats) {
  validate_config(config, prepared.grid(), tasks);
  std::vector<SolveResult> results(tasks.size());
  std::vector<std::size_t> applications(tasks.size(), 0);
  const int threads = config.workers > 0 ? config.workers : omp_get_max_threads();
  std::vector<PtdfMatrix> workspaces(static_cast<std::size_t>(threads));
  std::vector<char> used(static_cast<std::size_t>(threads), 0);
  std::exception_ptr failure;

  const auto n = static_cast<std::int64_t>(tasks.size());
  const auto wave = static_cast<std::int64_t>(config.max_batch);
  for (std::int64_t begin = 0; begin < n; begin += wave) {
    const std::int64_t end = std::min(n, begin + wave);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t t = begin; t < end; ++t) {
      const auto w = static_cast<std::size_t>(omp_get_thread_num());
      try {
        used[w] = 1;
        results[t] = solve_task(prepared, tasks[t], config, workspaces[w], &applications[t]);
      } catch (...) {
#pragma omp critical(batchdc_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  if (stats) {
    stats->bsdf_applications = std::accumulate(applications.begin(), applications.end(), std::size_t{0});
    stats->peak_live_ptdfs = static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));
  }
  return results;
}

// --- symmetric injection dedupe ------------------------------------------------------

DedupedTask dedupe_symmetric_injections(const TopologyTask& task, const Grid& grid) {
  // Slots are interchangeable when they sit at the same substation with the
  // same setpoint and the same contingency membership.
  std::vector<char> has_case(grid.injection_count(), 0);
  for (const auto& c : grid.contingencies()) {
    if (c.kind == ContingencyKind::injection) has_case[c.injection] = 1;
  }
  std::vector<std::vector<std::size_t>> groups;
  {
    std::map<std::tuple<std::size_t, double, char>, std::size_t> key_to_group;
    std::size_t slot = 0;
    const auto& subs = grid.substations();
    for (std::size_t s = 0; s < subs.size(); ++s) {
      for (auto i : subs[s].injection_elements) {
        const auto key = std::make_tuple(s, grid.injections()[i].setpoint, has_case[i]);
        auto [it, inserted] = key_to_group.emplace(key, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(slot++);
      }
    }
  }

  DedupedTask out;
  out.task.splits = task.splits;
  out.task.disconnections = task.disconnections;
  std::set<Assignment> seen;
  for (std::size_t j = 0; j < task.injection_sets.size(); ++j) {
    Assignment canonical = task.injection_sets[j];
    for (const auto& g : groups) {
      if (g.size() < 2) continue;
      const auto ones = std::count_if(g.begin(), g.end(), [&](std::size_t s) { return canonical[s]; });
      for (std::size_t k = 0; k < g.size(); ++k)
        canonical[g[k]] = static_cast<std::ptrdiff_t>(k) >= static_cast<std::ptrdiff_t>(g.size()) - ones;
    }
    if (seen.insert(canonical).second) {
      out.task.injection_sets.push_back(task.injection_sets[j]);
      out.original_index.push_back(j);
    }
  }
  return out;
}

std::size_t counted_loadflows(const SolveResult& result, const TopologyTask& task, const Grid& grid) {
  if (!result.diagnostics.feasible) return 0;
  const std::size_t feasible_cases = grid.contingencies().size() - result.diagnostics.islanding_contingencies.size();
  return task.injection_sets.size() * (1 + feasible_cases);
}

}  // namespace batchdc
