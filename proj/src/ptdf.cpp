#include "batchdc/ptdf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>
#include <Eigen/SparseCholesky>

#include "batchdc/errors.hpp"

namespace batchdc {

std::int32_t PtdfMatrix::row(BranchIndex k) const {
  if (k < 0 || k >= static_cast<BranchIndex>(row_of_branch.size()) || row_of_branch[k] < 0)
    throw ValidationError("branch " + std::to_string(k) + " has no retained PTDF row");
  return row_of_branch[k];
}

std::int32_t PtdfMatrix::col(NodeIndex v) const {
  if (!has_col(v)) throw InvalidReduction("node " + std::to_string(v) + " has no PTDF column");
  return col_of_node[v];
}

bool PtdfMatrix::is_split(std::int32_t substation) const noexcept {
  return std::any_of(applied_updates.begin(), applied_updates.end(), [&](const AppliedUpdate& u) {
    return u.kind == AppliedUpdate::Kind::split && u.substation == substation;
  });
}

NodalSusceptance build_susceptance(const Grid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.node_count());
  const auto m = static_cast<Eigen::Index>(grid.branch_count());
  std::vector<Eigen::Triplet<double>> lap, con;
  lap.reserve(4 * m);
  con.reserve(2 * m);
  for (Eigen::Index l = 0; l < m; ++l) {
    const auto& br = grid.branches()[l];
    const double b = br.susceptance;
    lap.emplace_back(br.from, br.from, b);
    lap.emplace_back(br.to, br.to, b);
    lap.emplace_back(br.from, br.to, -b);
    lap.emplace_back(br.to, br.from, -b);
    con.emplace_back(l, br.from, b);
    con.emplace_back(l, br.to, -b);
  }
  NodalSusceptance out;
  out.laplacian.resize(n, n);
  out.laplacian.setFromTriplets(lap.begin(), lap.end());
  out.connectivity.resize(m, n);
  out.connectivity.setFromTriplets(con.begin(), con.end());
  return out;
}

std::vector<BranchIndex> default_retained_rows(const Grid& grid) {
  std::vector<char> needed(grid.branch_count(), 0);
  for (const auto& sub : grid.substations())
    for (auto l : sub.branch_elements) needed[l] = 1;
  for (const auto& c : grid.contingencies())
    for (auto l : c.branches) needed[l] = 1;
  std::vector<BranchIndex> rows = grid.monitored();
  for (BranchIndex l = 0; l < static_cast<BranchIndex>(grid.branch_count()); ++l) {
    if (needed[l] && !grid.branches()[l].monitored) rows.push_back(l);
  }
  return rows;
}

PtdfMatrix compute_ptdf(const Grid& grid) {
  const auto rows = default_retained_rows(grid);
  return compute_ptdf(grid, rows);
}

PtdfMatrix compute_ptdf(const Grid& grid, std::span<const BranchIndex> retained_rows) {
  const auto n = static_cast<Eigen::Index>(grid.node_count());
  const NodeIndex slack = grid.slack();
  auto reduced = [slack](NodeIndex v) { return v < slack ? v : v - 1; };

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * grid.branch_count());
  for (const auto& br : grid.branches()) {
    const double b = br.susceptance;
    const bool f = br.from != slack, t = br.to != slack;
    if (f) trip.emplace_back(reduced(br.from), reduced(br.from), b);
    if (t) trip.emplace_back(reduced(br.to), reduced(br.to), b);
    if (f && t) {
      trip.emplace_back(reduced(br.from), reduced(br.to), -b);
      trip.emplace_back(reduced(br.to), reduced(br.from), -b);
    }
  }
  Eigen::SparseMatrix<double> reduced_laplacian(n - 1, n - 1);
  reduced_laplacian.setFromTriplets(trip.begin(), trip.end());

  const auto r = static_cast<Eigen::Index>(retained_rows.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n - 1, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& br = grid.branches().at(retained_rows[i]);
    if (br.from != slack) rhs(reduced(br.from), i) += br.susceptance;
    if (br.to != slack) rhs(reduced(br.to), i) -= br.susceptance;
  }

  Eigen::MatrixXd solved;
  if (n > 1) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(reduced_laplacian);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("susceptance matrix is singular");
    solved = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !solved.allFinite())
      throw SingularSystem("susceptance solve failed");
  }

  PtdfMatrix out;
  out.slack = slack;
  out.values.setZero(r, n);
  for (NodeIndex v = 0; v < n; ++v) {
    if (v != slack) out.values.col(v) = solved.row(reduced(v)).transpose();
  }
  out.row_branch.assign(retained_rows.begin(), retained_rows.end());
  out.row_of_branch.assign(grid.branch_count(), -1);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto l = retained_rows[i];
    if (out.row_of_branch[l] != -1) throw ValidationError("retained row set lists a branch twice");
    out.row_of_branch[l] = static_cast<std::int32_t>(i);
    out.row_from_col.push_back(grid.branches()[l].from);
    out.row_to_col.push_back(grid.branches()[l].to);
    out.row_susceptance.push_back(grid.branches()[l].susceptance);
    out.row_in_service.push_back(1);
  }
  out.col_node.resize(n);
  out.col_of_node.assign(grid.node_count() + grid.substations().size(), -1);
  for (NodeIndex v = 0; v < n; ++v) {
    out.col_node[v] = v;
    out.col_of_node[v] = v;
  }
  return out;
}

PtdfMatrix reduce_static(const PtdfMatrix& ptdf, const Grid& grid, std::span<const NodeIndex> static_nodes,
                         std::span<const double> nodal_power) {
  if (ptdf.static_col >= 0) throw InvalidReduction("PTDF is already reduced");
  if (nodal_power.size() != grid.node_count())
    throw InvalidReduction("nodal power vector does not match the node count");
  const auto allowed = static_injection_fold(grid, movable_injections(grid)).static_nodes;
  std::vector<char> drop(ptdf.col_of_node.size(), 0);
  for (NodeIndex v : static_nodes) {
    if (!std::binary_search(allowed.begin(), allowed.end(), v))
      throw InvalidReduction("node '" + grid.node_ids().at(v) + "' cannot be folded into the static column");
    if (!ptdf.has_col(v)) throw InvalidReduction("node '" + grid.node_ids()[v] + "' has no column");
    drop[v] = 1;
  }

  PtdfMatrix out = ptdf;
  Eigen::VectorXd static_flow = Eigen::VectorXd::Zero(ptdf.rows());
  for (NodeIndex v : static_nodes) static_flow += ptdf.values.col(ptdf.col(v)) * nodal_power[v];

  std::vector<std::int32_t> kept;
  for (std::int32_t c = 0; c < ptdf.cols(); ++c) {
    const NodeIndex v = ptdf.col_node[c];
    if (v == kNoIndex || !drop[v]) kept.push_back(c);
  }
  const auto cols = static_cast<Eigen::Index>(kept.size());
  out.values.resize(ptdf.rows(), cols + 1);
  out.col_node.assign(cols + 1, kNoIndex);
  std::fill(out.col_of_node.begin(), out.col_of_node.end(), -1);
  std::vector<std::int32_t> remap(ptdf.cols(), -1);
  for (Eigen::Index c = 0; c < cols; ++c) {
    out.values.col(c) = ptdf.values.col(kept[c]);
    out.col_node[c] = ptdf.col_node[kept[c]];
    out.col_of_node[out.col_node[c]] = static_cast<std::int32_t>(c);
    remap[kept[c]] = static_cast<std::int32_t>(c);
  }
  out.values.col(cols) = static_flow;
  out.static_col = static_cast<std::int32_t>(cols);
  for (std::size_t i = 0; i < out.row_branch.size(); ++i) {
    out.row_from_col[i] = ptdf.row_from_col[i] >= 0 ? remap[ptdf.row_from_col[i]] : -1;
    out.row_to_col[i] = ptdf.row_to_col[i] >= 0 ? remap[ptdf.row_to_col[i]] : -1;
  }
  out.applied_updates.push_back({AppliedUpdate::Kind::static_reduction, kNoIndex, {}});
  return out;
}

void reserve_split_columns(PtdfMatrix& ptdf, const Grid& grid) {
  const auto& subs = grid.substations();
  std::vector<std::int32_t> missing;
  for (std::size_t s = 0; s < subs.size(); ++s) {
    if (!ptdf.has_col(grid.split_node(s))) missing.push_back(static_cast<std::int32_t>(s));
  }
  if (missing.empty()) return;
  const auto old_cols = ptdf.cols();
  ptdf.values.conservativeResize(Eigen::NoChange, old_cols + static_cast<Eigen::Index>(missing.size()));
  for (std::size_t i = 0; i < missing.size(); ++i) {
    const auto s = static_cast<std::size_t>(missing[i]);
    const auto c = static_cast<std::int32_t>(old_cols + static_cast<Eigen::Index>(i));
    ptdf.values.col(c) = ptdf.values.col(ptdf.col(subs[s].node));
    ptdf.col_node.push_back(grid.split_node(s));
    ptdf.col_of_node[grid.split_node(s)] = c;
  }
}

Eigen::VectorXd column_power(const PtdfMatrix& ptdf, std::span<const double> nodal_power) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(ptdf.cols());
  for (std::size_t v = 0; v < nodal_power.size(); ++v) {
    const auto node = static_cast<NodeIndex>(v);
    if (ptdf.has_col(node)) p[ptdf.col_of_node[node]] += nodal_power[v];
  }
  if (ptdf.static_col >= 0) p[ptdf.static_col] = 1.0;
  return p;
}

Eigen::VectorXd n0_flows(const PtdfMatrix& ptdf, const Eigen::VectorXd& column_power) {
  return ptdf.values * column_power;
}

Eigen::VectorXd n0_delta(const PtdfMatrix& ptdf, const Eigen::VectorXd& base_flows,
                         std::span<const NodalDelta> delta) {
  Eigen::VectorXd flows = base_flows;
  for (const auto& d : delta) {
    if (d.mw != 0.0) flows += d.mw * ptdf.values.col(ptdf.col(d.node));
  }
  return flows;
}

// --- single outages ------------------------------------------------------------

namespace {

std::pair<std::int32_t, std::int32_t> endpoint_cols(const PtdfMatrix& ptdf, std::int32_t r) {
  const auto f = ptdf.row_from_col[r], t = ptdf.row_to_col[r];
  if (f < 0 || t < 0)
    throw InvalidReduction("branch " + std::to_string(ptdf.row_branch[r]) +
                           " has an endpoint folded into the static column");
  return {f, t};
}

}  // namespace

Eigen::VectorXd lodf_column(const PtdfMatrix& ptdf, BranchIndex k) {
  const auto r = ptdf.row(k);
  const auto [f, t] = endpoint_cols(ptdf, r);
  Eigen::VectorXd col = ptdf.values.col(f) - ptdf.values.col(t);
  const double denominator = 1.0 - col[r];
  if (std::abs(denominator) < kIslandingTolerance)
    throw IslandingError("outage of branch " + std::to_string(k) + " islands the grid");
  col /= denominator;
  col[r] = -1.0;
  return col;
}

Eigen::VectorXd apply_outage_to_flows(const Eigen::VectorXd& base_flows, const Eigen::VectorXd& lodf_col,
                                      std::int32_t row) {
  Eigen::VectorXd flows = base_flows + lodf_col * base_flows[row];
  flows[row] = 0.0;
  return flows;
}

void apply_outage_in_place(PtdfMatrix& ptdf, const Eigen::VectorXd& lodf_col, BranchIndex k) {
  const auto r = ptdf.row(k);
  const Eigen::RowVectorXd outaged = ptdf.values.row(r);
  ptdf.values.noalias() += lodf_col * outaged;
  ptdf.values.row(r).setZero();
  ptdf.row_in_service[r] = 0;
  ptdf.applied_updates.push_back({AppliedUpdate::Kind::outage, kNoIndex, {k}});
}

PtdfMatrix apply_outage_to_ptdf(const PtdfMatrix& ptdf, const Eigen::VectorXd& lodf_col, BranchIndex k) {
  PtdfMatrix out = ptdf;
  apply_outage_in_place(out, lodf_col, k);
  return out;
}

// --- multiple outages ----------------------------------------------------------

ModfMatrix compute_modf(const PtdfMatrix& ptdf, std::span<const BranchIndex> outages) {
  if (outages.empty()) throw ValidationError("MODF needs at least one outage");
  const auto n = static_cast<Eigen::Index>(outages.size());
  ModfMatrix modf;
  modf.outages.assign(outages.begin(), outages.end());
  Eigen::MatrixXd transfer(ptdf.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto r = ptdf.row(outages[j]);
    if (std::find(modf.outage_rows.begin(), modf.outage_rows.end(), r) != modf.outage_rows.end())
      throw ValidationError("outage set lists a branch twice");
    modf.outage_rows.push_back(r);
    const auto [f, t] = endpoint_cols(ptdf, r);
    transfer.col(j) = ptdf.values.col(f) - ptdf.values.col(t);
  }
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) system.row(i) -= transfer.row(modf.outage_rows[i]);

  // MODF * system = transfer  <=>  system^T * MODF^T = transfer^T
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system.transpose());
  if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() < kIslandingTolerance)
    throw IslandingError("simultaneous outage of " + std::to_string(n) + " branches islands the grid");
  modf.values = lu.solve(transfer.transpose()).transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    modf.values.row(modf.outage_rows[i]).setZero();
    modf.values(modf.outage_rows[i], i) = -1.0;
  }
  return modf;
}

Eigen::VectorXd apply_modf_to_flows(const Eigen::VectorXd& base_flows, const ModfMatrix& modf) {
  Eigen::VectorXd outaged(modf.outage_rows.size());
  for (std::size_t i = 0; i < modf.outage_rows.size(); ++i) outaged[i] = base_flows[modf.outage_rows[i]];
  Eigen::VectorXd flows = base_flows + modf.values * outaged;
  for (auto r : modf.outage_rows) flows[r] = 0.0;
  return flows;
}

void apply_modf_in_place(PtdfMatrix& ptdf, const ModfMatrix& modf) {
  Eigen::MatrixXd outaged(modf.outage_rows.size(), ptdf.cols());
  for (std::size_t i = 0; i < modf.outage_rows.size(); ++i) outaged.row(i) = ptdf.values.row(modf.outage_rows[i]);
  ptdf.values.noalias() += modf.values * outaged;
  for (auto r : modf.outage_rows) {
    ptdf.values.row(r).setZero();
    ptdf.row_in_service[r] = 0;
  }
  ptdf.applied_updates.push_back({AppliedUpdate::Kind::multi_outage, kNoIndex, modf.outages});
}

PtdfMatrix apply_modf_to_ptdf(const PtdfMatrix& ptdf, const ModfMatrix& modf) {
  PtdfMatrix out = ptdf;
  apply_modf_in_place(out, modf);
  return out;
}

void apply_outages_sequential_in_place(PtdfMatrix& ptdf, std::span<const BranchIndex> outages) {
  for (auto k : outages) apply_outage_in_place(ptdf, lodf_column(ptdf, k), k);
}

// --- bus splits ------------------------------------------------------------------

BsdfUpdate compute_bsdf(const PtdfMatrix& ptdf, const Grid& grid, std::int32_t substation,
                        const std::vector<bool>& branch_assignment) {
  const auto& sub = grid.substations().at(static_cast<std::size_t>(substation));
  if (branch_assignment.size() != sub.branch_elements.size())
    throw ValidationError("branch assignment for substation '" + grid.node_ids()[sub.node] + "' has length " +
                          std::to_string(branch_assignment.size()) + ", expected " +
                          std::to_string(sub.branch_elements.size()));
  if (ptdf.is_split(substation))
    throw ValidationError("substation '" + grid.node_ids()[sub.node] + "' is already split");

  const auto col_a = ptdf.col(sub.node);
  const NodeIndex node_b = grid.split_node(static_cast<std::size_t>(substation));
  const bool materialized = ptdf.has_col(node_b);
  const auto cols = ptdf.cols();

  BsdfUpdate update;
  update.substation = substation;
  update.col_a = col_a;
  update.node_b = node_b;
  update.new_col = materialized ? ptdf.col_of_node[node_b] : static_cast<std::int32_t>(cols);
  for (std::size_t j = 0; j < branch_assignment.size(); ++j) {
    if (branch_assignment[j]) update.moved_rows.push_back(ptdf.row(sub.branch_elements[j]));
  }
  const Eigen::Index coupler_len = materialized ? cols : cols + 1;
  if (update.moved_rows.empty()) {
    update.identity = true;
    update.bsdf = Eigen::VectorXd::Zero(ptdf.rows());
    update.coupler = Eigen::RowVectorXd::Zero(coupler_len);
    return update;
  }

  // Stay set S: in-service rows still touching A.
  std::vector<std::int32_t> stay;
  double stay_susceptance = 0.0;
  for (std::int32_t r = 0; r < ptdf.rows(); ++r) {
    if (!ptdf.row_in_service[r]) continue;
    if (ptdf.row_from_col[r] != col_a && ptdf.row_to_col[r] != col_a) continue;
    if (std::find(update.moved_rows.begin(), update.moved_rows.end(), r) != update.moved_rows.end()) continue;
    stay.push_back(r);
    stay_susceptance += ptdf.row_susceptance[r];
  }
  if (!(stay_susceptance > 0.0))
    throw DegenerateSplit("split of substation '" + grid.node_ids()[sub.node] + "' leaves busbar A without branches");

  // Closed coupler: column B equals column A until the split is applied.
  const auto col_b_values = materialized ? ptdf.values.col(update.new_col) : ptdf.values.col(col_a);

  update.coupler = Eigen::RowVectorXd::Zero(coupler_len);
  for (auto r : update.moved_rows) {
    const double sigma = ptdf.row_from_col[r] == col_a ? 1.0 : -1.0;
    update.coupler.head(cols) += sigma * ptdf.values.row(r);
    if (!materialized) update.coupler[cols] += sigma * ptdf.values(r, col_a);
  }
  update.coupler[update.new_col] -= 1.0;

  Eigen::VectorXd shifted = -col_b_values;
  Eigen::VectorXd correction = Eigen::VectorXd::Zero(ptdf.rows());
  double coupler_shift = -update.coupler[update.new_col];
  for (auto r : stay) {
    const double weight = ptdf.row_susceptance[r] / stay_susceptance;
    const bool a_is_from = ptdf.row_from_col[r] == col_a;
    const auto far = a_is_from ? ptdf.row_to_col[r] : ptdf.row_from_col[r];
    if (far < 0) throw InvalidReduction("far end of a stay-set branch was folded into the static column");
    shifted += weight * ptdf.values.col(far);
    coupler_shift += weight * update.coupler[far];
#ifdef BATCHDC_FAULT_INJECTION
    correction[r] = a_is_from ? -weight : weight;
#else
    correction[r] = a_is_from ? weight : -weight;
#endif
  }
  update.denominator = 1.0 - coupler_shift;
  if (std::abs(update.denominator) < kIslandingTolerance)
    throw SingularSplit("split of substation '" + grid.node_ids()[sub.node] + "' islands the grid");
  update.bsdf = (shifted + correction) / update.denominator;
  return update;
}

void apply_bsdf_in_place(PtdfMatrix& ptdf, const BsdfUpdate& update) {
  if (update.new_col == ptdf.cols()) {
    // Materialize B as a copy of A (closed coupler) before the rank-1 update.
    ptdf.values.conservativeResize(Eigen::NoChange, ptdf.cols() + 1);
    ptdf.values.col(update.new_col) = ptdf.values.col(update.col_a);
    ptdf.col_node.push_back(update.node_b);
    ptdf.col_of_node.at(update.node_b) = update.new_col;
  }
  if (!update.identity) ptdf.values.noalias() += update.bsdf * update.coupler;
  std::vector<BranchIndex> moved;
  for (auto r : update.moved_rows) {
    if (ptdf.row_from_col[r] == update.col_a) {
      ptdf.row_from_col[r] = update.new_col;
    } else {
      ptdf.row_to_col[r] = update.new_col;
    }
    moved.push_back(ptdf.row_branch[r]);
  }
  ptdf.applied_updates.push_back({AppliedUpdate::Kind::split, update.substation, std::move(moved)});
}

PtdfMatrix apply_bsdf(const PtdfMatrix& ptdf, const BsdfUpdate& update) {
  PtdfMatrix out = ptdf;
  apply_bsdf_in_place(out, update);
  return out;
}

}  // namespace batchdc
