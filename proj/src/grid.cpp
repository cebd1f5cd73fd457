#include "batchdc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "batchdc/errors.hpp"
#include "union_find.hpp"

namespace batchdc {

namespace {

template <typename T>
bool has_duplicates(std::vector<T> values) {
  std::sort(values.begin(), values.end());
  return std::adjacent_find(values.begin(), values.end()) != values.end();
}

void fail(const std::string& message) { throw ValidationError(message); }

}  // namespace

std::string_view to_string(ContingencyKind kind) {
  switch (kind) {
    case ContingencyKind::single_branch:
      return "single_branch";
    case ContingencyKind::multi_branch:
      return "multi_branch";
    case ContingencyKind::injection:
      return "injection";
  }
  return "unknown";
}

ContingencyKind contingency_kind_from_string(std::string_view text) {
  if (text == "single_branch") return ContingencyKind::single_branch;
  if (text == "multi_branch") return ContingencyKind::multi_branch;
  if (text == "injection") return ContingencyKind::injection;
  throw ParseError("unknown contingency kind '" + std::string(text) + "'");
}

Grid::Grid(GridData data) : data_(std::move(data)) {
  const auto n = static_cast<NodeIndex>(data_.node_ids.size());
  if (n == 0) fail("grid has no nodes");

  for (NodeIndex i = 0; i < n; ++i) {
    if (!node_lookup_.emplace(data_.node_ids[i], i).second)
      fail("duplicate node id '" + data_.node_ids[i] + "'");
  }
  auto valid_node = [n](NodeIndex v) { return v >= 0 && v < n; };

  for (BranchIndex l = 0; l < static_cast<BranchIndex>(data_.branches.size()); ++l) {
    const auto& br = data_.branches[l];
    if (!branch_lookup_.emplace(br.id, l).second) fail("duplicate branch id '" + br.id + "'");
    if (!valid_node(br.from) || !valid_node(br.to))
      fail("branch '" + br.id + "' references an unknown node");
    if (br.from == br.to) fail("branch '" + br.id + "' is a self loop");
    if (!(br.susceptance > 0.0) || !std::isfinite(br.susceptance))
      fail("branch '" + br.id + "' needs a finite positive susceptance");
    if (!(br.rating > 0.0) || !std::isfinite(br.rating))
      fail("branch '" + br.id + "' needs a finite positive rating");
    if (br.monitored) monitored_.push_back(l);
  }
  if (monitored_.empty()) fail("monitored branch set is empty");

  for (InjectionIndex i = 0; i < static_cast<InjectionIndex>(data_.injections.size()); ++i) {
    const auto& inj = data_.injections[i];
    if (!injection_lookup_.emplace(inj.id, i).second)
      fail("duplicate injection id '" + inj.id + "'");
    if (!valid_node(inj.node)) fail("injection '" + inj.id + "' references an unknown node");
    if (!std::isfinite(inj.setpoint)) fail("injection '" + inj.id + "' has a non-finite setpoint");
  }

  if (!valid_node(data_.slack)) fail("grid has no valid slack node");

  detail::UnionFind uf(static_cast<std::size_t>(n));
  for (const auto& br : data_.branches) uf.unite(br.from, br.to);
  if (uf.components() != 1) fail("grid is not connected");

  substation_of_node_.assign(static_cast<std::size_t>(n), kNoIndex);
  for (std::size_t s = 0; s < data_.substations.size(); ++s) {
    const auto& sub = data_.substations[s];
    if (!valid_node(sub.node)) fail("substation references an unknown node");
    const auto& name = data_.node_ids[sub.node];
    if (substation_of_node_[sub.node] != kNoIndex) fail("duplicate substation at '" + name + "'");
    substation_of_node_[sub.node] = static_cast<std::int32_t>(s);
    if (has_duplicates(sub.branch_elements)) fail("substation '" + name + "' lists a branch twice");
    if (has_duplicates(sub.injection_elements))
      fail("substation '" + name + "' lists an injection twice");
    std::size_t incident = 0;
    for (const auto& br : data_.branches) incident += (br.from == sub.node || br.to == sub.node);
    if (incident != sub.branch_elements.size())
      fail("substation '" + name + "' must list every incident branch");
    for (auto l : sub.branch_elements) {
      if (l < 0 || l >= static_cast<BranchIndex>(data_.branches.size()))
        fail("substation '" + name + "' references an unknown branch");
      const auto& br = data_.branches[l];
      if (br.from != sub.node && br.to != sub.node)
        fail("branch '" + br.id + "' is not incident on substation '" + name + "'");
    }
    for (auto i : sub.injection_elements) {
      if (i < 0 || i >= static_cast<InjectionIndex>(data_.injections.size()))
        fail("substation '" + name + "' references an unknown injection");
      if (data_.injections[i].node != sub.node)
        fail("injection '" + data_.injections[i].id + "' does not sit at substation '" + name + "'");
    }
    injection_slots_ += sub.injection_elements.size();
  }

  std::unordered_set<std::string> contingency_ids;
  for (const auto& c : data_.contingencies) {
    if (!contingency_ids.insert(c.id).second) fail("duplicate contingency id '" + c.id + "'");
    switch (c.kind) {
      case ContingencyKind::single_branch:
        if (c.branches.size() != 1) fail("contingency '" + c.id + "' needs exactly one branch");
        break;
      case ContingencyKind::multi_branch:
        if (c.branches.size() < 2) fail("contingency '" + c.id + "' needs at least two branches");
        break;
      case ContingencyKind::injection:
        if (!c.branches.empty()) fail("injection contingency '" + c.id + "' lists branches");
        if (c.injection < 0 || c.injection >= static_cast<InjectionIndex>(data_.injections.size()))
          fail("contingency '" + c.id + "' references an unknown injection");
        break;
    }
    if (has_duplicates(c.branches)) fail("contingency '" + c.id + "' lists a branch twice");
    for (auto l : c.branches) {
      if (l < 0 || l >= static_cast<BranchIndex>(data_.branches.size()))
        fail("contingency '" + c.id + "' references an unknown branch");
    }
  }
}

std::vector<double> Grid::nodal_power() const {
  std::vector<double> p(node_count(), 0.0);
  for (const auto& inj : data_.injections) p[inj.node] += inj.setpoint;
  return p;
}

NodeIndex Grid::node_index(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) throw ValidationError("unknown node '" + std::string(id) + "'");
  return it->second;
}

BranchIndex Grid::branch_index(std::string_view id) const {
  auto it = branch_lookup_.find(std::string(id));
  if (it == branch_lookup_.end()) throw ValidationError("unknown branch '" + std::string(id) + "'");
  return it->second;
}

InjectionIndex Grid::injection_index(std::string_view id) const {
  auto it = injection_lookup_.find(std::string(id));
  if (it == injection_lookup_.end())
    throw ValidationError("unknown injection '" + std::string(id) + "'");
  return it->second;
}

std::int32_t Grid::substation_at(NodeIndex node) const noexcept {
  if (node < 0 || node >= static_cast<NodeIndex>(substation_of_node_.size())) return kNoIndex;
  return substation_of_node_[node];
}

// --- native JSON ------------------------------------------------------------

namespace {

using nlohmann::json;

template <typename T>
T field(const json& obj, const char* key, const char* what) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError(std::string(what) + " is missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + "." + key + ": " + e.what());
  }
}

// Index lookups used while parsing: dangling references are validation
// errors, not parse errors.
template <typename Map>
std::int32_t resolve(const Map& map, const std::string& id, const char* what) {
  auto it = map.find(id);
  if (it == map.end()) throw ValidationError(std::string(what) + " '" + id + "' does not exist");
  return it->second;
}

}  // namespace

Grid parse_native(const json& doc) {
  if (!doc.is_object()) throw ParseError("grid document must be a JSON object");
  for (const char* key : {"nodes", "branches", "injections", "slack"}) {
    if (!doc.contains(key)) throw ParseError(std::string("grid document is missing '") + key + "'");
  }
  GridData data;
  std::unordered_map<std::string, std::int32_t> nodes, branches, injections;

  for (const auto& n : doc.at("nodes")) {
    auto id = field<std::string>(n, "id", "node");
    nodes.emplace(id, static_cast<std::int32_t>(data.node_ids.size()));
    data.node_ids.push_back(std::move(id));
  }
  for (const auto& b : doc.at("branches")) {
    Branch br;
    br.id = field<std::string>(b, "id", "branch");
    br.from = resolve(nodes, field<std::string>(b, "from", "branch"), "node");
    br.to = resolve(nodes, field<std::string>(b, "to", "branch"), "node");
    br.susceptance = field<double>(b, "susceptance", "branch");
    br.rating = field<double>(b, "rating", "branch");
    br.monitored = b.value("monitored", true);
    branches.emplace(br.id, static_cast<std::int32_t>(data.branches.size()));
    data.branches.push_back(std::move(br));
  }
  for (const auto& i : doc.at("injections")) {
    Injection inj;
    inj.id = field<std::string>(i, "id", "injection");
    inj.node = resolve(nodes, field<std::string>(i, "node", "injection"), "node");
    inj.setpoint = field<double>(i, "p_mw", "injection");
    injections.emplace(inj.id, static_cast<std::int32_t>(data.injections.size()));
    data.injections.push_back(std::move(inj));
  }
  if (!doc.at("slack").is_string()) throw ParseError("slack must be a node id string");
  data.slack = resolve(nodes, doc.at("slack").get<std::string>(), "slack node");

  for (const auto& s : doc.value("substations", json::array())) {
    SplittableSubstation sub;
    sub.node = resolve(nodes, field<std::string>(s, "node", "substation"), "node");
    for (const auto& id : field<std::vector<std::string>>(s, "branch_elements", "substation"))
      sub.branch_elements.push_back(resolve(branches, id, "branch"));
    for (const auto& id : field<std::vector<std::string>>(s, "injection_elements", "substation"))
      sub.injection_elements.push_back(resolve(injections, id, "injection"));
    data.substations.push_back(std::move(sub));
  }
  for (const auto& c : doc.value("contingencies", json::array())) {
    ContingencyCase cc;
    cc.id = field<std::string>(c, "id", "contingency");
    cc.kind = contingency_kind_from_string(field<std::string>(c, "kind", "contingency"));
    if (c.contains("branches")) {
      for (const auto& id : field<std::vector<std::string>>(c, "branches", "contingency"))
        cc.branches.push_back(resolve(branches, id, "branch"));
    }
    if (c.contains("injection"))
      cc.injection = resolve(injections, field<std::string>(c, "injection", "contingency"), "injection");
    data.contingencies.push_back(std::move(cc));
  }
  return Grid(std::move(data));
}

json to_native_json(const Grid& grid) {
  const auto& d = grid.data();
  json doc;
  doc["nodes"] = json::array();
  for (const auto& id : d.node_ids) doc["nodes"].push_back({{"id", id}});
  doc["branches"] = json::array();
  for (const auto& br : d.branches) {
    doc["branches"].push_back({{"id", br.id},
                               {"from", d.node_ids[br.from]},
                               {"to", d.node_ids[br.to]},
                               {"susceptance", br.susceptance},
                               {"rating", br.rating},
                               {"monitored", br.monitored}});
  }
  doc["injections"] = json::array();
  for (const auto& inj : d.injections)
    doc["injections"].push_back({{"id", inj.id}, {"node", d.node_ids[inj.node]}, {"p_mw", inj.setpoint}});
  doc["slack"] = d.node_ids[d.slack];
  doc["substations"] = json::array();
  for (const auto& sub : d.substations) {
    json be = json::array(), ie = json::array();
    for (auto l : sub.branch_elements) be.push_back(d.branches[l].id);
    for (auto i : sub.injection_elements) ie.push_back(d.injections[i].id);
    doc["substations"].push_back(
        {{"node", d.node_ids[sub.node]}, {"branch_elements", be}, {"injection_elements", ie}});
  }
  doc["contingencies"] = json::array();
  for (const auto& c : d.contingencies) {
    json entry = {{"id", c.id}, {"kind", to_string(c.kind)}};
    if (c.kind == ContingencyKind::injection) {
      entry["injection"] = d.injections[c.injection].id;
    } else {
      json ids = json::array();
      for (auto l : c.branches) ids.push_back(d.branches[l].id);
      entry["branches"] = ids;
    }
    doc["contingencies"].push_back(std::move(entry));
  }
  return doc;
}

Grid load_native(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_native(doc);
}

void save_native(const Grid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write grid file " + path.string());
  out << to_native_json(grid).dump(1) << '\n';
}

}  // namespace batchdc
