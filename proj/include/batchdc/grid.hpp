#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace batchdc {

// Dense indices. Nodes split off a substation by a bus split get the index
// node_count() + substation position, so they never collide with grid nodes.
using NodeIndex = std::int32_t;
using BranchIndex = std::int32_t;
using InjectionIndex = std::int32_t;

inline constexpr std::int32_t kNoIndex = -1;

/// Directed branch; positive flow runs from `from` to `to`, flow = b * (theta_from - theta_to).
struct Branch {
  std::string id;
  NodeIndex from = kNoIndex;
  NodeIndex to = kNoIndex;
  double susceptance = 0.0;  // per unit, > 0
  double rating = 0.0;       // MW, > 0
  bool monitored = true;
};

/// Signed nodal injection: generation positive, load negative.
struct Injection {
  std::string id;
  NodeIndex node = kNoIndex;
  double setpoint = 0.0;  // MW
};

/// A substation that may be split into busbars A (false) and B (true).
/// The element order fixes the meaning of boolean topology vectors.
struct SplittableSubstation {
  NodeIndex node = kNoIndex;
  std::vector<BranchIndex> branch_elements;
  std::vector<InjectionIndex> injection_elements;
};

enum class ContingencyKind { single_branch, multi_branch, injection };

std::string_view to_string(ContingencyKind kind);
ContingencyKind contingency_kind_from_string(std::string_view text);

struct ContingencyCase {
  std::string id;
  ContingencyKind kind = ContingencyKind::single_branch;
  std::vector<BranchIndex> branches;
  InjectionIndex injection = kNoIndex;
};

/// Mutable description of a network; turned into a validated Grid.
struct GridData {
  std::vector<std::string> node_ids;
  std::vector<Branch> branches;
  std::vector<Injection> injections;
  NodeIndex slack = kNoIndex;
  std::vector<ContingencyCase> contingencies;
  std::vector<SplittableSubstation> substations;
};

/// Immutable, validated network. Safe to share across threads.
class Grid {
 public:
  /// Validates every invariant (references, positivity, connectivity).
  /// Throws ValidationError.
  explicit Grid(GridData data);

  const GridData& data() const noexcept { return data_; }

  std::size_t node_count() const noexcept { return data_.node_ids.size(); }
  std::size_t branch_count() const noexcept { return data_.branches.size(); }
  std::size_t injection_count() const noexcept { return data_.injections.size(); }

  const std::vector<std::string>& node_ids() const noexcept { return data_.node_ids; }
  const std::vector<Branch>& branches() const noexcept { return data_.branches; }
  const std::vector<Injection>& injections() const noexcept { return data_.injections; }
  const std::vector<ContingencyCase>& contingencies() const noexcept { return data_.contingencies; }
  const std::vector<SplittableSubstation>& substations() const noexcept { return data_.substations; }
  NodeIndex slack() const noexcept { return data_.slack; }

  /// Monitored branch indices in grid order.
  const std::vector<BranchIndex>& monitored() const noexcept { return monitored_; }

  /// Per-node sum of injection setpoints (P_n).
  std::vector<double> nodal_power() const;

  /// Total number of injection slots over all substations (length of t_i).
  std::size_t injection_slot_count() const noexcept { return injection_slots_; }

  NodeIndex node_index(std::string_view id) const;
  BranchIndex branch_index(std::string_view id) const;
  InjectionIndex injection_index(std::string_view id) const;
  /// Position in substations() of the substation at `node`, or kNoIndex.
  std::int32_t substation_at(NodeIndex node) const noexcept;

  /// Index of the node created when substation `position` is split.
  NodeIndex split_node(std::size_t position) const noexcept {
    return static_cast<NodeIndex>(node_count() + position);
  }

 private:
  GridData data_;
  std::vector<BranchIndex> monitored_;
  std::unordered_map<std::string, NodeIndex> node_lookup_;
  std::unordered_map<std::string, BranchIndex> branch_lookup_;
  std::unordered_map<std::string, InjectionIndex> injection_lookup_;
  std::vector<std::int32_t> substation_of_node_;
  std::size_t injection_slots_ = 0;
};

// --- native JSON format ----------------------------------------------------

Grid parse_native(const nlohmann::json& doc);
nlohmann::json to_native_json(const Grid& grid);
Grid load_native(const std::filesystem::path& path);
void save_native(const Grid& grid, const std::filesystem::path& path);

// --- MATPOWER import -------------------------------------------------------

struct MatpowerOptions {
  /// Used when a branch has rateA == 0 (MATPOWER's "unlimited").
  double default_rating_mw = 100.0;
};

/// One-way import of a MATPOWER version 2 case (bus/gen/branch tables).
/// Loads become negative injections, b = 1/|x|, out-of-service branches and
/// generators are dropped. The result monitors every branch and has no
/// substations or contingencies; see designate_defaults().
Grid parse_matpower(std::string_view text, const MatpowerOptions& options = {});
Grid import_matpower(const std::filesystem::path& path, const MatpowerOptions& options = {});

// --- topology helpers and preprocessing ------------------------------------

/// For every branch, true iff removing it disconnects the grid.
std::vector<bool> find_bridges(std::size_t node_count, const std::vector<Branch>& branches);

struct DefaultsOptions {
  bool branch_contingencies = true;      // every non-bridge branch
  bool generator_contingencies = false;  // every injection with setpoint > 0
  /// Restricts generator contingencies further; unset accepts all.
  std::function<bool(const Injection&)> generator_filter;
  std::size_t multi_outages = 0;         // pairs of branches sharing a node
  std::size_t substations = 0;           // highest-degree nodes
};

/// Populates contingencies and splittable substations with reproducible
/// defaults for grids imported without that information.
Grid designate_defaults(const Grid& grid, const DefaultsOptions& options);

/// Removes bridge branches that hang off a splittable substation with no
/// slack behind them, together with the dead-end subtree behind them. The
/// subtree injections are re-homed to the substation node and appended to
/// its injection elements.
Grid replace_stub_branches(const Grid& grid);

/// Injections whose nodal position can change: substation injection elements
/// and targets of injection contingencies.
std::vector<InjectionIndex> movable_injections(const Grid& grid);

struct StaticFold {
  std::vector<NodeIndex> static_nodes;     // T
  std::vector<NodeIndex> effective_nodes;  // columns kept, ascending
};

/// Nodes whose nodal power never changes and whose PTDF column no update
/// formula reads. Substation nodes, nodes hosting a movable injection, the
/// slack and both endpoints of every outage-capable branch (contingency or
/// substation element) are kept.
StaticFold static_injection_fold(const Grid& grid, const std::vector<InjectionIndex>& movable);

}  // namespace batchdc
