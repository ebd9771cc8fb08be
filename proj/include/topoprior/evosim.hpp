#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "topoprior/graphs.hpp"
#include "topoprior/rng.hpp"

namespace topoprior {

/// J = perf - lambda * token_cost / c_max, with
/// token_cost = a_v |V| + a_e |E| + b.
struct UtilityParams {
  double lambda = 0.1;
  double a_v = 10.0;
  double a_e = 5.0;
  double b = 2.0;
  double c_max = 522.0;  // cost of the complete 13-role graph

  /// c_max must cover the complete graph over `pool_size` roles.
  void validate(int pool_size) const;
  bool operator==(const UtilityParams&) const = default;
};

void to_json(nlohmann::json& j, const UtilityParams& p);
void from_json(const nlohmann::json& j, UtilityParams& p);

/// Edge F1 over unordered role pairs. Two empty edge sets score 1; exactly
/// one empty set scores 0.
double edge_f1(const CollaborationGraph& graph, const CollaborationGraph& reference);

double perf(const CollaborationGraph& graph, const CollaborationGraph& oracle);
double token_cost(const CollaborationGraph& graph, const UtilityParams& params);
double utility(const CollaborationGraph& graph, const CollaborationGraph& oracle,
               const UtilityParams& params);

enum class ContractionMode { kIdealized, kLocalSearch };

struct ContractionConfig {
  double contraction_eta = 0.5;  // idealized mode only
  ContractionMode mode = ContractionMode::kLocalSearch;
  int neighbor_samples_k = 16;
  /// Scan the whole single-edit neighborhood instead of sampling k moves.
  bool exhaustive = false;
  int max_rounds = 200;
  double epsilon = 0.01;
  /// Moves that would make |V| + |E| exceed this are never proposed.
  std::optional<int> size_cap;
  int pool_size = 13;

  void validate() const;
};

void to_json(nlohmann::json& j, const ContractionConfig& c);
void from_json(const nlohmann::json& j, ContractionConfig& c);

enum class InitSource { kPrior, kScratch, kTemplate };
std::string_view to_string(InitSource source);

enum class EditKind { kNone, kAddEdge, kRemoveEdge, kAddNode, kRemoveNode };

/// Edits act on roles. Adding an edge also adds whichever endpoint roles
/// are missing; removing a node drops its edges.
struct GraphEdit {
  EditKind kind = EditKind::kNone;
  int role_a = -1;
  int role_b = -1;
};

std::string to_string(const GraphEdit& edit);

struct EvolutionRound {
  CollaborationGraph graph;
  double utility = 0.0;
  /// Cost of running the previous graph to produce this one; 0 for round 0.
  double token_cost = 0.0;
  /// U* - U tracked directly (exact recursion in idealized mode).
  double residual = 0.0;
  GraphEdit edit;
};

struct EvolutionTrajectory {
  std::vector<EvolutionRound> rounds;  // rounds[0] is the initial graph
  InitSource init_source = InitSource::kScratch;
  double u_star = 0.0;

  int num_rounds() const { return static_cast<int>(rounds.size()) - 1; }
  double total_token_cost() const;
  double initial_utility() const { return rounds.front().utility; }
  double terminal_utility() const { return rounds.back().utility; }
  const CollaborationGraph& terminal_graph() const { return rounds.back().graph; }
};

/// Local search: each round proposes single edits (k sampled without
/// replacement, or all of them), moves to the best strictly improving one and
/// stops at max_rounds, when nothing improves, or once U* - U <= epsilon,
/// with U* the oracle's utility.
///
/// Idealized: the graph stays fixed and the residual follows
/// r <- (1 - eta) r from r_0 = U* - U_0 until r <= epsilon.
EvolutionTrajectory evolve(const CollaborationGraph& init,
                           const CollaborationGraph& oracle,
                           const ContractionConfig& config,
                           const UtilityParams& params, Rng& rng,
                           InitSource source = InitSource::kScratch);

/// Idealized recursion on scalars. Returns residuals r_0, r_1, ..., r_T.
std::vector<double> idealized_residuals(double u0, double u_star, double eta,
                                        double eps, int max_rounds);

/// Smallest T with gap * (1 - eta)^T <= eps, i.e.
/// ceil(log(gap / eps) / log(1 / (1 - eta))) for gap > eps, else 0.
int rounds_to_eps(double u0, double u_star, double eta, double eps);

/// rounds_to_eps(prior) - rounds_to_eps(scratch); requires u0_prior > u0_scratch.
int rounds_delta(double u0_prior, double u0_scratch, double u_star, double eta,
                 double eps);

/// T * ((a_v + a_e) * M + b).
double total_token_bound(int rounds, int size_cap, double a_v, double a_e, double b);

std::int64_t break_even(double train_tokens_total, double tokens_per_query_baseline,
                        double tokens_per_query_with_prior);

struct BreakEvenReport {
  double train_tokens_total = 0.0;
  double tokens_per_query_baseline = 0.0;
  double tokens_per_query_with_prior = 0.0;
  double savings_per_query = 0.0;
  std::int64_t queries = 0;
  /// A previously published figure to compare against, when supplied.
  std::optional<double> reference_queries;
  double reference_relative_gap = 0.0;
};

BreakEvenReport break_even_report(double train_tokens_total, double baseline,
                                  double with_prior,
                                  std::optional<double> reference_queries);
nlohmann::json to_json(const BreakEvenReport& report);

/// 2 (1 - 2 e) clipped at 0, where e is the held-out balanced error of a
/// logistic probe separating the rows of `a` from the rows of `b`. Needs at
/// least 50 rows per side. Symmetric in its arguments.
double proxy_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        std::uint64_t seed = 0);

/// Valid graph with a uniform node count in [1, pool_size], uniformly chosen
/// roles and each forward edge kept with probability edge_probability.
CollaborationGraph random_graph(int pool_size, Rng& rng,
                                double edge_probability = 0.5);

/// random_graph, then random edges and after them random nodes are dropped
/// until |V| + |E| <= size_cap.
CollaborationGraph random_graph_capped(int pool_size, int size_cap, Rng& rng);

void write_trajectory_jsonl(std::ostream& out, const EvolutionTrajectory& trajectory,
                            const std::string& query_id);

struct TheoryConfig {
  std::vector<double> gaps = {0.25, 0.5, 1.0};
  std::vector<double> etas = {0.1, 0.3, 0.5, 0.9};
  std::vector<double> epsilons = {0.2, 0.05, 0.01};
  int token_trajectories = 1000;
  int size_cap = 12;
  int divergence_samples = 400;
  int divergence_dim = 16;
  std::uint64_t seed = 0;
  UtilityParams utility;
};

/// Idealized-mode rounds vs the closed form, initialization deltas, the
/// token-cost bound on capped random trajectories and proxy-divergence
/// sanity cases. Every case carries a `pass` flag; `all_pass` sums them up.
nlohmann::json run_theory_checks(const TheoryConfig& config);

}  // namespace topoprior
