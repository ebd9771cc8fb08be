#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace topoprior {

struct RoleDescriptor {
  int id = 0;
  std::string name;
  std::string description;
  std::vector<std::string> domain_tags;
};

/// Ordered catalog of agent roles a graph may draw from.
class RolePool {
 public:
  explicit RolePool(std::vector<RoleDescriptor> roles);

  /// The 13-role catalog (natural sciences through the general coordinator).
  static RolePool standard();

  int size() const { return static_cast<int>(roles_.size()); }
  const RoleDescriptor& operator[](int id) const { return roles_.at(id); }
  const std::vector<RoleDescriptor>& roles() const { return roles_; }

 private:
  std::vector<RoleDescriptor> roles_;
};

struct Edge {
  int source = 0;  // node position
  int target = 0;  // node position
  auto operator<=>(const Edge&) const = default;
};

/// Nodes are role ids in generation order; edges connect node positions and
/// point from an earlier position to a later one.
struct CollaborationGraph {
  std::vector<int> roles;
  std::vector<Edge> edges;

  int num_nodes() const { return static_cast<int>(roles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  bool has_edge(int s, int t) const;

  /// Equality up to edge ordering.
  friend bool operator==(const CollaborationGraph& a,
                         const CollaborationGraph& b);
};

enum class ViolationCode {
  kRoleRange,
  kDuplicateRole,
  kEdgeRange,
  kEdgeOrder,
  kDuplicateEdge,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string detail;
};

std::vector<Violation> validate(const CollaborationGraph& graph, int pool_size);

/// Throws ValidationError listing every violation.
void require_valid(const CollaborationGraph& graph, int pool_size);

/// Nodes sorted by role id, edges re-expressed in that order. An edge whose
/// endpoints swap order is reversed so it still points forward.
CollaborationGraph canonicalize(const CollaborationGraph& graph);

/// Edges as (lower role id, higher role id) pairs, sorted.
std::vector<std::pair<int, int>> role_pairs(const CollaborationGraph& graph);

struct AdjacencyMatrix {
  Eigen::MatrixXd entries;      // N x N over role slots, 0/1
  std::vector<bool> occupied;   // N
  int size() const { return static_cast<int>(occupied.size()); }
};

AdjacencyMatrix to_adjacency(const CollaborationGraph& graph, int pool_size);

/// D^-1/2 (A v A^T + I) D^-1/2 restricted to occupied slots. Unoccupied rows and
/// columns are zero.
Eigen::MatrixXd normalize_adjacency(const AdjacencyMatrix& adjacency);

nlohmann::json graph_to_json(const CollaborationGraph& graph);
CollaborationGraph graph_from_json(const nlohmann::json& j);

inline constexpr int kGraphFormatVersion = 1;

std::string serialize(const CollaborationGraph& graph);
/// Throws ParseError (with byte offset) on malformed input.
CollaborationGraph deserialize(std::string_view bytes);

/// Query text, or a precomputed feature vector.
using Query = std::variant<std::string, std::vector<double>>;

struct DatasetRecord {
  Query query;
  int domain_id = 0;
  CollaborationGraph graph;
  std::optional<double> teacher_utility;
  /// Seed of the query's role draw; lets the synthetic oracle be rebuilt.
  std::optional<std::uint64_t> query_seed;
};

void validate_record(const DatasetRecord& record, int pool_size,
                     int num_domains);

nlohmann::json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_jsonl(std::istream& in);
void write_jsonl_file(const std::string& path,
                      const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_jsonl_file(const std::string& path);

}  // namespace topoprior
