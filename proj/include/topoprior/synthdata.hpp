#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "topoprior/evosim.hpp"
#include "topoprior/graphs.hpp"

namespace topoprior {

enum class Motif { kChain, kStar, kTree, kTwoHub, kSparseRandom };

std::string_view to_string(Motif motif);
Motif parse_motif(std::string_view text);

/// One synthetic domain. A query draws between min_nodes and max_nodes roles
/// from role_subset; its oracle graph lays the motif over the drawn roles in
/// ascending id order. The query's feature signature comes from the
/// `domain:<id>` token its text carries.
struct DomainSpec {
  int domain_id = 0;
  Motif motif = Motif::kChain;
  std::vector<int> role_subset;
  int min_nodes = 3;
  int max_nodes = 6;
  /// Domain-specific filler words per query, drawn from `vocabulary` words.
  int noise_tokens = 4;
  int vocabulary = 24;
  /// Filler words shared by every domain.
  int shared_noise_tokens = 2;

  void validate(int pool_size) const;
};

void to_json(nlohmann::json& j, const DomainSpec& s);
void from_json(const nlohmann::json& j, DomainSpec& s);

/// Chain, star, tree and two-hub domains with ids 0..3.
std::vector<DomainSpec> default_domain_specs();
/// Held-out domain 4 with sparse random structure over a role mix of the others.
DomainSpec default_ood_spec();

std::vector<DomainSpec> load_domain_specs_file(const std::string& path);

/// Sorted role ids drawn for a query.
std::vector<int> draw_roles(const DomainSpec& spec, std::uint64_t query_seed);

/// The motif laid over `sorted_roles`; sparse-random structure depends on
/// `query_seed`.
CollaborationGraph motif_graph(Motif motif, const std::vector<int>& sorted_roles,
                               std::uint64_t query_seed);

std::string query_text(const DomainSpec& spec, std::uint64_t query_seed);

/// `per_domain` queries per spec, spec-major, each with its oracle graph as
/// the reference graph and no teacher utility.
std::vector<DatasetRecord> make_queries(const std::vector<DomainSpec>& specs,
                                        int per_domain, std::uint64_t seed);

const DomainSpec& spec_for(const DatasetRecord& record,
                           const std::vector<DomainSpec>& specs);

/// Throws ValidationError when the record has no query seed or no matching spec.
CollaborationGraph oracle_graph(const DatasetRecord& record,
                                const std::vector<DomainSpec>& specs);

struct SupervisionMode {
  enum class Kind { kFull, kCheapEarly, kStaticTemplate, kRandom };
  Kind kind = Kind::kFull;
  double fraction = 1.0;  // cheap-early only

  static SupervisionMode full() { return {Kind::kFull, 1.0}; }
  static SupervisionMode cheap_early(double fraction) {
    return {Kind::kCheapEarly, fraction};
  }
  static SupervisionMode static_template() { return {Kind::kStaticTemplate, 1.0}; }
  static SupervisionMode random() { return {Kind::kRandom, 1.0}; }

  void validate() const;
  /// "full", "cheap-early:<f>", "static-template" or "random".
  static SupervisionMode parse(std::string_view text);
  std::string to_string() const;
};

struct TeacherConfig {
  ContractionConfig search = [] {
    ContractionConfig c;
    c.exhaustive = true;
    c.max_rounds = 1000;
    c.epsilon = 1e-9;
    return c;
  }();
  UtilityParams utility;
};

struct TeacherGraph {
  CollaborationGraph graph;
  double utility = 0.0;
  /// Rounds the full search took, when one was run.
  int full_rounds = 0;
};

/// Fixed per-domain graph: the motif over the whole role subset.
CollaborationGraph template_graph(const DomainSpec& spec);

TeacherGraph build_teacher_graph(const DatasetRecord& record,
                                 const std::vector<DomainSpec>& specs,
                                 SupervisionMode mode, const TeacherConfig& config,
                                 std::uint64_t seed);

/// Copies of `records` whose graphs and utilities come from the teacher.
std::vector<DatasetRecord> annotate_teachers(const std::vector<DatasetRecord>& records,
                                             const std::vector<DomainSpec>& specs,
                                             SupervisionMode mode,
                                             const TeacherConfig& config,
                                             std::uint64_t seed);

std::vector<DatasetRecord> make_corpus(const std::vector<DomainSpec>& specs,
                                       int per_domain, std::uint64_t seed,
                                       SupervisionMode mode = SupervisionMode::full(),
                                       const TeacherConfig& config = {});

}  // namespace topoprior
