#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "batchdc/errors.hpp"
#include "batchdc/grid.hpp"

namespace batchdc {

namespace {

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '%') in_comment = true;
    if (c == '\n') in_comment = false;
    if (!in_comment) out.push_back(c);
  }
  return out;
}

// Reads `mpc.<name> = [ ... ];`. Rows end at ';' or newline.
Table read_table(const std::string& text, const std::string& name, bool required) {
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t after = pos + key.size();
    std::size_t eq = text.find_first_not_of(" \t", after);
    if (eq != std::string::npos && text[eq] == '=') break;
    pos = after;
  }
  if (pos == std::string::npos) {
    if (required) throw ParseError("MATPOWER case has no '" + key + "' table");
    return {};
  }
  const auto open = text.find('[', pos);
  const auto close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos)
    throw ParseError("unterminated '" + key + "' table");

  Table rows;
  std::vector<double> row;
  auto flush = [&] {
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  std::string token;
  auto push_token = [&] {
    if (token.empty()) return;
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) throw ParseError("bad number '" + token + "' in '" + key + "'");
    row.push_back(value);
    token.clear();
  };
  for (std::size_t i = open + 1; i < close; ++i) {
    const char c = text[i];
    if (c == ';' || c == '\n') {
      push_token();
      flush();
    } else if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
      push_token();
    } else {
      token.push_back(c);
    }
  }
  push_token();
  flush();
  return rows;
}

void require_columns(const Table& table, std::size_t n, const char* name) {
  for (const auto& row : table) {
    if (row.size() < n)
      throw ParseError(std::string("MATPOWER ") + name + " row has fewer than " + std::to_string(n) + " columns");
  }
}

std::string number_id(double value) {
  std::ostringstream os;
  os << static_cast<long long>(std::llround(value));
  return os.str();
}

}  // namespace

Grid parse_matpower(std::string_view raw, const MatpowerOptions& options) {
  const std::string text = strip_comments(raw);
  if (text.find("mpc.dcline") != std::string::npos) {
    const auto dc = read_table(text, "dcline", false);
    if (!dc.empty()) {
      throw UnsupportedFeature("MATPOWER dcline " + number_id(dc.front().at(0)) + "-" +
                               number_id(dc.front().at(1)) + " is not supported by the DC model");
    }
  }
  const Table bus = read_table(text, "bus", true);
  const Table gen = read_table(text, "gen", true);
  const Table branch = read_table(text, "branch", true);
  require_columns(bus, 3, "bus");
  require_columns(gen, 8, "gen");
  require_columns(branch, 11, "branch");

  GridData data;
  std::map<long long, NodeIndex> bus_index;
  for (const auto& row : bus) {
    const int type = static_cast<int>(row[1]);
    if (type == 4) continue;  // isolated bus
    const auto number = std::llround(row[0]);
    if (!bus_index.emplace(number, static_cast<NodeIndex>(data.node_ids.size())).second)
      throw ParseError("duplicate MATPOWER bus " + number_id(row[0]));
    data.node_ids.push_back(number_id(row[0]));
    if (type == 3) {
      if (data.slack != kNoIndex) throw ValidationError("MATPOWER case has more than one reference bus");
      data.slack = static_cast<NodeIndex>(data.node_ids.size() - 1);
    }
  }
  if (data.slack == kNoIndex) throw ValidationError("MATPOWER case has no reference bus");

  auto lookup = [&](double number, const std::string& what) -> std::optional<NodeIndex> {
    auto it = bus_index.find(std::llround(number));
    if (it != bus_index.end()) return it->second;
    // References to isolated buses drop the element; anything else is an error.
    for (const auto& row : bus) {
      if (std::llround(row[0]) == std::llround(number)) return std::nullopt;
    }
    throw ValidationError(what + " references unknown bus " + number_id(number));
  };

  for (std::size_t k = 0; k < branch.size(); ++k) {
    const auto& row = branch[k];
    if (row[10] <= 0.0) continue;  // out of service
    const std::string id = "br_" + std::to_string(k + 1);
    auto from = lookup(row[0], "branch " + id);
    auto to = lookup(row[1], "branch " + id);
    if (!from || !to) continue;
    const double x = row[3];
    if (x == 0.0) throw ValidationError("branch " + id + " has zero reactance (infinite susceptance)");
    Branch br;
    br.id = id;
    br.from = *from;
    br.to = *to;
    br.susceptance = 1.0 / std::abs(x);
    br.rating = row.size() > 5 && row[5] > 0.0 ? row[5] : options.default_rating_mw;
    br.monitored = true;
    data.branches.push_back(std::move(br));
  }

  for (const auto& row : bus) {
    if (static_cast<int>(row[1]) == 4 || row[2] == 0.0) continue;
    Injection load;
    load.id = "load_" + number_id(row[0]);
    load.node = bus_index.at(std::llround(row[0]));
    load.setpoint = -row[2];
    data.injections.push_back(std::move(load));
  }
  for (std::size_t k = 0; k < gen.size(); ++k) {
    const auto& row = gen[k];
    if (row[7] <= 0.0) continue;
    auto node = lookup(row[0], "generator " + std::to_string(k + 1));
    if (!node) continue;
    Injection g;
    g.id = "gen_" + std::to_string(k + 1);
    g.node = *node;
    g.setpoint = row[1];
    data.injections.push_back(std::move(g));
  }
  return Grid(std::move(data));
}

Grid import_matpower(const std::filesystem::path& path, const MatpowerOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open MATPOWER file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_matpower(buffer.str(), options);
}

}  // namespace batchdc
