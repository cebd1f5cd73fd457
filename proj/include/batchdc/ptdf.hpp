#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "batchdc/grid.hpp"

namespace batchdc {

/// |denominator| below this marks an outage or split as islanding.
inline constexpr double kIslandingTolerance = 1e-8;

struct AppliedUpdate {
  enum class Kind { static_reduction, split, outage, multi_outage };
  Kind kind;
  std::int32_t substation = kNoIndex;  // split only
  std::vector<BranchIndex> branches;   // moved branches (split) or outaged branches
};

/// Dense PTDF block: retained branch rows x effective node columns.
///
/// Columns cover effective grid nodes, the nodes created by bus splits
/// (index node_count() + substation position) and optionally one static
/// flow column p_T whose nodal power is fixed to 1. The slack column is kept
/// and is identically zero.
///
/// Each row remembers the columns of its current endpoints so outage
/// formulas keep working after splits move a branch to busbar B.
struct PtdfMatrix {
  Eigen::MatrixXd values;

  std::vector<BranchIndex> row_branch;
  std::vector<std::int32_t> row_of_branch;  // per grid branch, -1 if not retained
  std::vector<std::int32_t> row_from_col;   // -1 if the endpoint column was reduced away
  std::vector<std::int32_t> row_to_col;
  std::vector<double> row_susceptance;
  std::vector<char> row_in_service;

  std::vector<NodeIndex> col_node;          // kNoIndex for the static column
  std::vector<std::int32_t> col_of_node;    // per node incl. split nodes, -1 if absent
  std::int32_t static_col = -1;
  NodeIndex slack = kNoIndex;

  std::vector<AppliedUpdate> applied_updates;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }

  /// Row position of branch `k`; throws ValidationError if not retained.
  std::int32_t row(BranchIndex k) const;
  /// Column position of node `v`; throws InvalidReduction if absent.
  std::int32_t col(NodeIndex v) const;

  bool has_col(NodeIndex v) const noexcept {
    return v >= 0 && v < static_cast<NodeIndex>(col_of_node.size()) && col_of_node[v] >= 0;
  }
  bool is_split(std::int32_t substation) const noexcept;
};

struct NodalSusceptance {
  Eigen::SparseMatrix<double> laplacian;     // B, |V| x |V|
  Eigen::SparseMatrix<double> connectivity;  // C_w, |E| x |V|
};

NodalSusceptance build_susceptance(const Grid& grid);

/// Monitored branches in grid order, followed by the remaining branches that
/// contingencies or substations reference.
std::vector<BranchIndex> default_retained_rows(const Grid& grid);

/// Solves PTDF' B' = C_w' for the retained rows only. Throws SingularSystem.
PtdfMatrix compute_ptdf(const Grid& grid, std::span<const BranchIndex> retained_rows);
PtdfMatrix compute_ptdf(const Grid& grid);

/// Drops the columns of `static_nodes` and appends p_T. Throws
/// InvalidReduction when a dropped node is still needed by an update formula.
PtdfMatrix reduce_static(const PtdfMatrix& ptdf, const Grid& grid,
                         std::span<const NodeIndex> static_nodes, std::span<const double> nodal_power);

/// Appends one column per substation (copy of its node column) so bus splits
/// update the matrix in place. A closed coupler makes B and A electrically
/// identical, so the copy is exact.
void reserve_split_columns(PtdfMatrix& ptdf, const Grid& grid);

/// Maps per-node power (length node_count()) onto the column layout. Power
/// at folded static nodes is ignored: it already lives in p_T.
Eigen::VectorXd column_power(const PtdfMatrix& ptdf, std::span<const double> nodal_power);

Eigen::VectorXd n0_flows(const PtdfMatrix& ptdf, const Eigen::VectorXd& column_power);

struct NodalDelta {
  NodeIndex node;
  double mw;
};

/// p_n0 = p_old + PTDF * dP for a sparse dP.
Eigen::VectorXd n0_delta(const PtdfMatrix& ptdf, const Eigen::VectorXd& base_flows,
                         std::span<const NodalDelta> delta);

// --- single outages ----------------------------------------------------------

/// LODF column for branch `k`; the self entry is exactly -1.
/// Throws IslandingError when `k` is a bridge in the current topology.
Eigen::VectorXd lodf_column(const PtdfMatrix& ptdf, BranchIndex k);

/// p_n1 = p_n0 + LODF[:,k] * p_n0[k], with entry `row` forced to 0.
Eigen::VectorXd apply_outage_to_flows(const Eigen::VectorXd& base_flows, const Eigen::VectorXd& lodf_col,
                                      std::int32_t row);

PtdfMatrix apply_outage_to_ptdf(const PtdfMatrix& ptdf, const Eigen::VectorXd& lodf_col, BranchIndex k);
void apply_outage_in_place(PtdfMatrix& ptdf, const Eigen::VectorXd& lodf_col, BranchIndex k);

// --- multiple outages --------------------------------------------------------

struct ModfMatrix {
  Eigen::MatrixXd values;             // rows x |outages|
  std::vector<BranchIndex> outages;
  std::vector<std::int32_t> outage_rows;
};

/// Solves MODF (I - (PTDF[O,fO] - PTDF[O,tO])) = PTDF[:,fO] - PTDF[:,tO] by
/// partial-pivot LU and forces the outaged rows to -I.
/// Throws IslandingError when the outage set disconnects the grid.
ModfMatrix compute_modf(const PtdfMatrix& ptdf, std::span<const BranchIndex> outages);

Eigen::VectorXd apply_modf_to_flows(const Eigen::VectorXd& base_flows, const ModfMatrix& modf);
PtdfMatrix apply_modf_to_ptdf(const PtdfMatrix& ptdf, const ModfMatrix& modf);
void apply_modf_in_place(PtdfMatrix& ptdf, const ModfMatrix& modf);

/// Outages `outages` one LODF at a time.
void apply_outages_sequential_in_place(PtdfMatrix& ptdf, std::span<const BranchIndex> outages);

// --- bus splits ----------------------------------------------------------------

struct BsdfUpdate {
  Eigen::VectorXd bsdf;         // per row
  Eigen::RowVectorXd coupler;   // PTDF_bbc per column (+1 trailing entry if B is not materialized)
  std::int32_t substation = kNoIndex;
  std::int32_t col_a = -1;
  NodeIndex node_b = kNoIndex;
  std::int32_t new_col = -1;    // column of B; == cols() when it must be appended
  std::vector<std::int32_t> moved_rows;
  double denominator = 1.0;
  bool identity = false;
};

/// Bus split of substation `substation` (position in grid.substations()):
/// branches whose assignment bit is true move to the new busbar B.
///
/// With S the branches staying at A (stay set) and b_S their susceptance sum:
///   P_shift = -e_B + sum_{l in S} b_l / b_S * e_far(l)
///   P_corr[l] = +-b_l / b_S on S (sign + when A is the from-node)
///   PTDF_bbc = sum_{l moved} sigma_l PTDF[l,:] - e_B,  sigma_l = +1 if A is l's from-node
///   BSDF = (PTDF P_shift + P_corr) / (1 - PTDF_bbc P_shift)
/// PTDF_bbc is the flow over the closed coupler from A to B. P_corr carries the
/// fact that, once A only touches S, a transfer from the S far ends into A
/// loads nothing but S.
///
/// Throws SingularSplit (split islands the grid) or DegenerateSplit (empty S).
BsdfUpdate compute_bsdf(const PtdfMatrix& ptdf, const Grid& grid, std::int32_t substation,
                        const std::vector<bool>& branch_assignment);

/// PTDF' = PTDF + BSDF * PTDF_bbc.
PtdfMatrix apply_bsdf(const PtdfMatrix& ptdf, const BsdfUpdate& update);
void apply_bsdf_in_place(PtdfMatrix& ptdf, const BsdfUpdate& update);

}  // namespace batchdc
