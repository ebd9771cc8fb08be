#include "topoprior/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "topoprior/error.hpp"

namespace topoprior {

RolePool::RolePool(std::vector<RoleDescriptor> roles) : roles_(std::move(roles)) {
  if (roles_.empty()) throw ValidationError("role pool must not be empty");
  std::set<std::string> names;
  for (int i = 0; i < size(); ++i) {
    if (roles_[i].id != i)
      throw ValidationError("role ids must be contiguous from 0; got " +
                            std::to_string(roles_[i].id) + " at slot " +
                            std::to_string(i));
    if (!names.insert(roles_[i].name).second)
      throw ValidationError("duplicate role name: " + roles_[i].name);
  }
}

RolePool RolePool::standard() {
  return RolePool({
      {0, "Natural Science Expert", "general science facts experiments and units",
       {"natural-sciences"}},
      {1, "Engineering Specialist", "software systems circuits and technical design",
       {"engineering-technology"}},
      {2, "Social Scientist", "economics psychology sociology and survey data",
       {"social-sciences"}},
      {3, "Humanities Scholar", "history philosophy literature and culture",
       {"humanities-history"}},
      {4, "Legal Analyst", "statutes contracts regulation and case law",
       {"law-government"}},
      {5, "Ethics Consultant", "moral dilemmas norms and value tradeoffs",
       {"ethics-morality"}},
      {6, "Business Strategist", "markets accounting management and pricing",
       {"business-management"}},
      {7, "Mathematical Expert", "proofs algebra probability and statistics",
       {"mathematics"}},
      {8, "Chemistry Specialist", "reactions compounds and lab procedures",
       {"chemistry"}},
      {9, "Physics Specialist", "mechanics fields energy and waves",
       {"physics"}},
      {10, "Medical Life Scientist", "clinical care anatomy agriculture and biology",
       {"medical"}},
      {11, "Vocational Examiner", "certification exams taxation and public service",
       {"vocational"}},
      {12, "General Coordinator", "routes subtasks and merges specialist answers",
       {"multi-domain"}},
  });
}

bool CollaborationGraph::has_edge(int s, int t) const {
  return std::find(edges.begin(), edges.end(), Edge{s, t}) != edges.end();
}

bool operator==(const CollaborationGraph& a, const CollaborationGraph& b) {
  if (a.roles != b.roles || a.edges.size() != b.edges.size()) return false;
  auto ea = a.edges;
  auto eb = b.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kRoleRange: return "ROLE_RANGE";
    case ViolationCode::kDuplicateRole: return "DUPLICATE_ROLE";
    case ViolationCode::kEdgeRange: return "EDGE_RANGE";
    case ViolationCode::kEdgeOrder: return "EDGE_ORDER";
    case ViolationCode::kDuplicateEdge: return "DUPLICATE_EDGE";
  }
  return "UNKNOWN";
}

std::vector<Violation> validate(const CollaborationGraph& graph, int pool_size) {
  std::vector<Violation> out;
  std::vector<bool> seen(std::max(pool_size, 0), false);
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const int role = graph.roles[i];
    if (role < 0 || role >= pool_size) {
      out.push_back({ViolationCode::kRoleRange,
                     "node " + std::to_string(i) + " has role " +
                         std::to_string(role)});
      continue;
    }
    if (seen[role])
      out.push_back({ViolationCode::kDuplicateRole,
                     "role " + std::to_string(role) + " repeated at node " +
                         std::to_string(i)});
    seen[role] = true;
  }
  std::set<Edge> edges;
  for (const auto& e : graph.edges) {
    const std::string tag =
        "(" + std::to_string(e.source) + "," + std::to_string(e.target) + ")";
    if (e.source < 0 || e.target < 0 || e.source >= graph.num_nodes() ||
        e.target >= graph.num_nodes()) {
      out.push_back({ViolationCode::kEdgeRange, "edge " + tag});
      continue;
    }
    if (e.source >= e.target)
      out.push_back({ViolationCode::kEdgeOrder, "edge " + tag});
    if (!edges.insert(e).second)
      out.push_back({ViolationCode::kDuplicateEdge, "edge " + tag});
  }
  return out;
}

void require_valid(const CollaborationGraph& graph, int pool_size) {
  const auto violations = validate(graph, pool_size);
  if (violations.empty()) return;
  std::string msg = "invalid graph:";
  for (const auto& v : violations)
    msg += " " + std::string(to_string(v.code)) + "[" + v.detail + "]";
  throw ValidationError(msg);
}

CollaborationGraph canonicalize(const CollaborationGraph& graph) {
  std::vector<int> order(graph.roles.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return graph.roles[a] < graph.roles[b];
  });
  std::vector<int> position(order.size());
  CollaborationGraph out;
  out.roles.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    position[order[i]] = static_cast<int>(i);
    out.roles.push_back(graph.roles[order[i]]);
  }
  std::set<Edge> edges;
  for (const auto& e : graph.edges) {
    int s = position.at(e.source);
    int t = position.at(e.target);
    if (s > t) std::swap(s, t);
    if (s != t) edges.insert({s, t});
  }
  out.edges.assign(edges.begin(), edges.end());
  return out;
}

std::vector<std::pair<int, int>> role_pairs(const CollaborationGraph& graph) {
  std::vector<std::pair<int, int>> out;
  out.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    const int a = graph.roles.at(e.source);
    const int b = graph.roles.at(e.target);
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

AdjacencyMatrix to_adjacency(const CollaborationGraph& graph, int pool_size) {
  require_valid(graph, pool_size);
  AdjacencyMatrix a;
  a.entries = Eigen::MatrixXd::Zero(pool_size, pool_size);
  a.occupied.assign(pool_size, false);
  for (int role : graph.roles) a.occupied[role] = true;
  for (const auto& e : graph.edges)
    a.entries(graph.roles[e.source], graph.roles[e.target]) = 1.0;
  return a;
}

Eigen::MatrixXd normalize_adjacency(const AdjacencyMatrix& adjacency) {
  const int n = adjacency.size();
  Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (!adjacency.occupied[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (!adjacency.occupied[j]) continue;
      if (i == j || adjacency.entries(i, j) != 0.0 ||
          adjacency.entries(j, i) != 0.0)
        sym(i, j) = 1.0;
    }
  }
  Eigen::VectorXd inv_sqrt_degree = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double degree = sym.row(i).sum();
    if (degree > 0.0) inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  return inv_sqrt_degree.asDiagonal() * sym * inv_sqrt_degree.asDiagonal();
}

nlohmann::json graph_to_json(const CollaborationGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges) edges.push_back({e.source, e.target});
  return {{"format_version", kGraphFormatVersion},
          {"roles", graph.roles},
          {"edges", std::move(edges)}};
}

CollaborationGraph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("graph must be a JSON object");
  const int version = j.value("format_version", -1);
  if (version != kGraphFormatVersion)
    throw ValidationError("unsupported graph format_version " +
                          std::to_string(version));
  CollaborationGraph g;
  try {
    g.roles = j.at("roles").get<std::vector<int>>();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw ValidationError("edge must be a [source, target] pair");
      g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("graph schema: ") + ex.what());
  }
  return g;
}

std::string serialize(const CollaborationGraph& graph) {
  return graph_to_json(graph).dump();
}

namespace {

// The parser reports a 1-based position; an unexpected end lands on `size`.
std::size_t error_offset(const nlohmann::json::parse_error& ex, std::size_t size) {
  return std::min<std::size_t>(ex.byte > 0 ? ex.byte - 1 : 0, size);
}

}  // namespace

CollaborationGraph deserialize(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(ex.what(), error_offset(ex, bytes.size()));
  }
  return graph_from_json(j);
}

void validate_record(const DatasetRecord& record, int pool_size,
                     int num_domains) {
  if (record.domain_id < 0 || record.domain_id >= num_domains)
    throw ValidationError("domain_id " + std::to_string(record.domain_id) +
                          " outside [0, " + std::to_string(num_domains) + ")");
  require_valid(record.graph, pool_size);
}

nlohmann::json record_to_json(const DatasetRecord& record) {
  nlohmann::json j;
  if (const auto* text = std::get_if<std::string>(&record.query))
    j["query"] = *text;
  else
    j["query"] = std::get<std::vector<double>>(record.query);
  j["domain_id"] = record.domain_id;
  j["graph"] = graph_to_json(record.graph);
  if (record.teacher_utility) j["teacher_utility"] = *record.teacher_utility;
  if (record.query_seed) j["query_seed"] = *record.query_seed;
  return j;
}

DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  try {
    const auto& q = j.at("query");
    if (q.is_string())
      r.query = q.get<std::string>();
    else
      r.query = q.get<std::vector<double>>();
    r.domain_id = j.at("domain_id").get<int>();
    r.graph = graph_from_json(j.at("graph"));
    if (j.contains("teacher_utility") && !j["teacher_utility"].is_null())
      r.teacher_utility = j["teacher_utility"].get<double>();
    if (j.contains("query_seed"))
      r.query_seed = j["query_seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("record schema: ") + ex.what());
  }
  return r;
}

void write_jsonl(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<DatasetRecord> read_jsonl(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw ParseError(ex.what(), line_start + error_offset(ex, line.size()));
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

void write_jsonl_file(const std::string& path,
                      const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  write_jsonl(out, records);
}

std::vector<DatasetRecord> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open: " + path);
  return read_jsonl(in);
}

}  // namespace topoprior
