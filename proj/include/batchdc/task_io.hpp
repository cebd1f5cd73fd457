#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchdc/batch_solver.hpp"
#include "batchdc/grid.hpp"

namespace batchdc {

/// One task line: {"splits":[{"substation":node id,"branch_assignment":[bool]}],
/// "disconnections":[branch ids],"injection_sets":[[bool]]}. A missing
/// injection_sets means a single all-A assignment. Throws ParseError.
TopologyTask parse_task(const nlohmann::json& line, const Grid& grid);
nlohmann::json task_to_json(const TopologyTask& task, const Grid& grid);

std::vector<TopologyTask> read_tasks(std::istream& in, const Grid& grid);
std::vector<TopologyTask> load_tasks(const std::filesystem::path& path, const Grid& grid);
void write_tasks(std::ostream& out, std::span<const TopologyTask> tasks, const Grid& grid);

/// metric is null when infinite.
nlohmann::json result_to_json(const SolveResult& result, std::size_t task_index, const Grid& grid);
void write_results(std::ostream& out, std::span<const SolveResult> results, const Grid& grid);

/// Row-major float64 matrix plus a JSON sidecar naming rows (branch ids) and
/// columns (node ids; "<node>#B" for split busbars, "__static__" for p_T).
void write_ptdf_dump(const PtdfMatrix& ptdf, const Grid& grid, const std::filesystem::path& binary,
                     const std::filesystem::path& sidecar);

}  // namespace batchdc
