#include "batchdc/task_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "batchdc/errors.hpp"

namespace batchdc {

namespace {

using nlohmann::json;

Assignment bools(const json& array, const char* what) {
  if (!array.is_array()) throw ParseError(std::string(what) + " must be an array of booleans");
  Assignment out;
  out.reserve(array.size());
  for (const auto& v : array) {
    if (!v.is_boolean()) throw ParseError(std::string(what) + " must contain booleans only");
    out.push_back(v.get<bool>());
  }
  return out;
}

json bool_array(const Assignment& bits) {
  json out = json::array();
  for (bool b : bits) out.push_back(b);
  return out;
}

std::string column_name(const PtdfMatrix& ptdf, const Grid& grid, std::int32_t c) {
  const NodeIndex v = ptdf.col_node[c];
  if (v == kNoIndex) return "__static__";
  if (v < static_cast<NodeIndex>(grid.node_count())) return grid.node_ids()[v];
  const auto s = static_cast<std::size_t>(v) - grid.node_count();
  return grid.node_ids()[grid.substations()[s].node] + "#B";
}

}  // namespace

TopologyTask parse_task(const json& line, const Grid& grid) {
  if (!line.is_object()) throw ParseError("task line is not a JSON object");
  TopologyTask task;
  try {
    if (line.contains("splits")) {
      for (const auto& s : line.at("splits")) {
        SplitAction split;
        const auto node = grid.node_index(s.at("substation").get<std::string>());
        split.substation = grid.substation_at(node);
        if (split.substation == kNoIndex)
          throw ParseError("node '" + s.at("substation").get<std::string>() + "' is not a splittable substation");
        split.branch_assignment = bools(s.at("branch_assignment"), "branch_assignment");
        task.splits.push_back(std::move(split));
      }
    }
    if (line.contains("disconnections")) {
      for (const auto& id : line.at("disconnections")) task.disconnections.push_back(grid.branch_index(id.get<std::string>()));
    }
    if (line.contains("injection_sets")) {
      for (const auto& t_i : line.at("injection_sets")) task.injection_sets.push_back(bools(t_i, "injection_sets"));
    } else {
      task.injection_sets.emplace_back(grid.injection_slot_count(), false);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed task: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("task references unknown element: ") + e.what());
  }
  return task;
}

json task_to_json(const TopologyTask& task, const Grid& grid) {
  json out;
  out["splits"] = json::array();
  for (const auto& s : task.splits) {
    out["splits"].push_back({{"substation", grid.node_ids()[grid.substations()[s.substation].node]},
                             {"branch_assignment", bool_array(s.branch_assignment)}});
  }
  out["disconnections"] = json::array();
  for (auto l : task.disconnections) out["disconnections"].push_back(grid.branches()[l].id);
  out["injection_sets"] = json::array();
  for (const auto& t_i : task.injection_sets) out["injection_sets"].push_back(bool_array(t_i));
  return out;
}

std::vector<TopologyTask> read_tasks(std::istream& in, const Grid& grid) {
  std::vector<TopologyTask> tasks;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("task line " + std::to_string(number) + ": " + e.what());
    }
    try {
      tasks.push_back(parse_task(doc, grid));
    } catch (const ParseError& e) {
      throw ParseError("task line " + std::to_string(number) + ": " + e.what());
    }
  }
  return tasks;
}

std::vector<TopologyTask> load_tasks(const std::filesystem::path& path, const Grid& grid) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open task file " + path.string());
  return read_tasks(in, grid);
}

void write_tasks(std::ostream& out, std::span<const TopologyTask> tasks, const Grid& grid) {
  for (const auto& task : tasks) out << task_to_json(task, grid).dump() << '\n';
}

json result_to_json(const SolveResult& result, std::size_t task_index, const Grid& grid) {
  json out;
  out["task"] = task_index;
  out["metric"] = std::isfinite(result.metric) ? json(result.metric) : json(nullptr);
  out["best_injection"] = result.best_injection;
  out["feasible"] = result.diagnostics.feasible;
  json n0 = json::array(), n1 = json::array();
  for (const auto& e : result.report.n0_worst) {
    n0.push_back({{"branch", grid.branches()[e.branch].id}, {"flow", e.flow}, {"relative_load", e.relative_load}});
  }
  for (const auto& e : result.report.n1_worst) {
    n1.push_back({{"contingency", grid.contingencies()[e.contingency].id},
                  {"branch", grid.branches()[e.branch].id},
                  {"flow", e.flow},
                  {"relative_load", e.relative_load}});
  }
  out["report"] = {{"n0_worst", n0}, {"n1_worst", n1}};
  json islanding = json::array(), identity = json::array();
  for (auto c : result.diagnostics.islanding_contingencies) islanding.push_back(grid.contingencies()[c].id);
  for (auto s : result.diagnostics.identity_splits) identity.push_back(grid.node_ids()[grid.substations()[s].node]);
  out["diagnostics"] = {{"islanding_contingencies", islanding}, {"identity_splits", identity}};
  if (!result.diagnostics.error.empty()) out["diagnostics"]["error"] = result.diagnostics.error;
  return out;
}

void write_results(std::ostream& out, std::span<const SolveResult> results, const Grid& grid) {
  for (std::size_t t = 0; t < results.size(); ++t) out << result_to_json(results[t], t, grid).dump() << '\n';
}

void write_ptdf_dump(const PtdfMatrix& ptdf, const Grid& grid, const std::filesystem::path& binary,
                     const std::filesystem::path& sidecar) {
  std::ofstream bin(binary, std::ios::binary);
  if (!bin) throw ParseError("cannot write " + binary.string());
  for (Eigen::Index r = 0; r < ptdf.rows(); ++r) {
    for (Eigen::Index c = 0; c < ptdf.cols(); ++c) {
      const double v = ptdf.values(r, c);
      bin.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!bin) throw ParseError("failed writing " + binary.string());

  json meta;
  meta["dtype"] = "float64";
  meta["byte_order"] = "little";
  meta["layout"] = "row_major";
  meta["rows"] = ptdf.rows();
  meta["cols"] = ptdf.cols();
  meta["row_branches"] = json::array();
  for (auto l : ptdf.row_branch) meta["row_branches"].push_back(grid.branches()[l].id);
  meta["col_nodes"] = json::array();
  for (std::int32_t c = 0; c < ptdf.cols(); ++c) meta["col_nodes"].push_back(column_name(ptdf, grid, c));
  meta["slack"] = grid.node_ids()[grid.slack()];
  meta["static_column"] = ptdf.static_col >= 0 ? json(ptdf.static_col) : json(nullptr);
  std::ofstream side(sidecar);
  if (!side) throw ParseError("cannot write " + sidecar.string());
  side << meta.dump(1) << '\n';
}

}  // namespace batchdc
