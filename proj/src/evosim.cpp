#include "topoprior/evosim.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

#include "topoprior/error.hpp"
#include "topoprior/nn.hpp"

namespace topoprior {

void UtilityParams::validate(int pool_size) const {
  if (!(lambda >= 0.0) || !(a_v >= 0.0) || !(a_e >= 0.0) || !(b >= 0.0))
    throw ConfigError("utility coefficients must be non-negative");
  const double n = pool_size;
  if (!(c_max > 0.0) || c_max < a_v * n + a_e * n * (n - 1.0) / 2.0 + b)
    throw ConfigError("c_max must cover the cost of the complete graph");
}

void to_json(nlohmann::json& j, const UtilityParams& p) {
  j = {{"lambda", p.lambda}, {"a_v", p.a_v}, {"a_e", p.a_e}, {"b", p.b},
       {"c_max", p.c_max}};
}

void from_json(const nlohmann::json& j, UtilityParams& p) {
  UtilityParams d;
  p.lambda = j.value("lambda", d.lambda);
  p.a_v = j.value("a_v", d.a_v);
  p.a_e = j.value("a_e", d.a_e);
  p.b = j.value("b", d.b);
  p.c_max = j.value("c_max", d.c_max);
}

namespace {

constexpr int kMaxRoles = 32;

/// Graph as role sets: bit b of up[a] marks the pair (a, b) with a < b.
struct RoleGraph {
  std::uint32_t nodes = 0;
  std::array<std::uint32_t, kMaxRoles> up{};

  int num_nodes() const { return std::popcount(nodes); }
  int num_edges() const {
    int n = 0;
    for (const auto row : up) n += std::popcount(row);
    return n;
  }
  bool has(int a, int b) const { return (up[a] >> b) & 1U; }
  bool operator==(const RoleGraph&) const = default;
};

RoleGraph to_role_graph(const CollaborationGraph& g) {
  RoleGraph out;
  for (const int r : g.roles) {
    if (r < 0 || r >= kMaxRoles) throw ValidationError("role id out of range");
    out.nodes |= 1U << r;
  }
  for (const auto& e : g.edges) {
    if (e.source < 0 || e.target < 0 || e.source >= g.num_nodes() ||
        e.target >= g.num_nodes())
      throw ValidationError("edge endpoint out of range");
    const int a = g.roles[e.source];
    const int b = g.roles[e.target];
    if (a == b) continue;
    out.up[std::min(a, b)] |= 1U << std::max(a, b);
  }
  return out;
}

CollaborationGraph to_graph(const RoleGraph& rg) {
  CollaborationGraph g;
  std::array<int, kMaxRoles> position{};
  for (int r = 0; r < kMaxRoles; ++r)
    if ((rg.nodes >> r) & 1U) {
      position[r] = g.num_nodes();
      g.roles.push_back(r);
    }
  for (int a = 0; a < kMaxRoles; ++a)
    for (int b = a + 1; b < kMaxRoles; ++b)
      if (rg.has(a, b)) g.edges.push_back({position[a], position[b]});
  return g;
}

double f1(const RoleGraph& g, const RoleGraph& ref) {
  int tp = 0;
  int predicted = 0;
  int actual = 0;
  for (int a = 0; a < kMaxRoles; ++a) {
    tp += std::popcount(g.up[a] & ref.up[a]);
    predicted += std::popcount(g.up[a]);
    actual += std::popcount(ref.up[a]);
  }
  if (predicted == 0 && actual == 0) return 1.0;
  if (predicted == 0 || actual == 0) return 0.0;
  return 2.0 * tp / static_cast<double>(predicted + actual);
}

double cost(const RoleGraph& g, const UtilityParams& p) {
  return p.a_v * g.num_nodes() + p.a_e * g.num_edges() + p.b;
}

double utility(const RoleGraph& g, const RoleGraph& oracle, const UtilityParams& p) {
  return f1(g, oracle) - p.lambda * cost(g, p) / p.c_max;
}

RoleGraph apply(RoleGraph g, const GraphEdit& e) {
  switch (e.kind) {
    case EditKind::kAddEdge:
      g.nodes |= (1U << e.role_a) | (1U << e.role_b);
      g.up[e.role_a] |= 1U << e.role_b;
      break;
    case EditKind::kRemoveEdge:
      g.up[e.role_a] &= ~(1U << e.role_b);
      break;
    case EditKind::kAddNode:
      g.nodes |= 1U << e.role_a;
      break;
    case EditKind::kRemoveNode:
      g.nodes &= ~(1U << e.role_a);
      g.up[e.role_a] = 0;
      for (auto& row : g.up) row &= ~(1U << e.role_a);
      break;
    case EditKind::kNone:
      break;
  }
  return g;
}

std::vector<GraphEdit> neighborhood(const RoleGraph& g, int pool_size,
                                    std::optional<int> size_cap) {
  std::vector<GraphEdit> out;
  for (int a = 0; a < pool_size; ++a)
    for (int b = a + 1; b < pool_size; ++b)
      out.push_back({g.has(a, b) ? EditKind::kRemoveEdge : EditKind::kAddEdge, a, b});
  for (int r = 0; r < pool_size; ++r)
    out.push_back({((g.nodes >> r) & 1U) ? EditKind::kRemoveNode : EditKind::kAddNode, r});
  if (size_cap) {
    std::erase_if(out, [&](const GraphEdit& e) {
      const RoleGraph next = apply(g, e);
      return next.num_nodes() + next.num_edges() > *size_cap;
    });
  }
  return out;
}

void remove_random_edge(RoleGraph& g, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < kMaxRoles; ++a)
    for (int b = a + 1; b < kMaxRoles; ++b)
      if (g.has(a, b)) edges.emplace_back(a, b);
  const auto& [a, b] =
      edges[std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng)];
  g.up[a] &= ~(1U << b);
}

}  // namespace

double edge_f1(const CollaborationGraph& graph, const CollaborationGraph& reference) {
  return f1(to_role_graph(graph), to_role_graph(reference));
}

double perf(const CollaborationGraph& graph, const CollaborationGraph& oracle) {
  return edge_f1(graph, oracle);
}

double token_cost(const CollaborationGraph& graph, const UtilityParams& params) {
  return params.a_v * graph.num_nodes() + params.a_e * graph.num_edges() + params.b;
}

double utility(const CollaborationGraph& graph, const CollaborationGraph& oracle,
               const UtilityParams& params) {
  return perf(graph, oracle) - params.lambda * token_cost(graph, params) / params.c_max;
}

void ContractionConfig::validate() const {
  if (!(contraction_eta > 0.0 && contraction_eta <= 1.0))
    throw ConfigError("contraction_eta must lie in (0, 1]");
  if (neighbor_samples_k < 1) throw ConfigError("neighbor_samples_k must be at least 1");
  if (max_rounds < 0) throw ConfigError("max_rounds must be non-negative");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (pool_size < 1 || pool_size > kMaxRoles)
    throw ConfigError("pool_size must lie in [1, 32] for the evolver");
  if (size_cap && *size_cap < 1) throw ConfigError("size_cap must be at least 1");
}

void to_json(nlohmann::json& j, const ContractionConfig& c) {
  j = {{"contraction_eta", c.contraction_eta},
       {"mode", c.mode == ContractionMode::kIdealized ? "idealized" : "local-search"},
       {"neighbor_samples_k", c.neighbor_samples_k},
       {"exhaustive", c.exhaustive},
       {"max_rounds", c.max_rounds},
       {"epsilon", c.epsilon},
       {"size_cap", c.size_cap ? nlohmann::json(*c.size_cap) : nlohmann::json()},
       {"pool_size", c.pool_size}};
}

void from_json(const nlohmann::json& j, ContractionConfig& c) {
  ContractionConfig d;
  c.contraction_eta = j.value("contraction_eta", d.contraction_eta);
  const std::string mode = j.value("mode", std::string("local-search"));
  if (mode == "idealized")
    c.mode = ContractionMode::kIdealized;
  else if (mode == "local-search")
    c.mode = ContractionMode::kLocalSearch;
  else
    throw ConfigError("unknown contraction mode '" + mode + "'");
  c.neighbor_samples_k = j.value("neighbor_samples_k", d.neighbor_samples_k);
  c.exhaustive = j.value("exhaustive", d.exhaustive);
  c.max_rounds = j.value("max_rounds", d.max_rounds);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.size_cap.reset();
  if (j.contains("size_cap") && !j["size_cap"].is_null())
    c.size_cap = j["size_cap"].get<int>();
  c.pool_size = j.value("pool_size", d.pool_size);
}

std::string_view to_string(InitSource source) {
  switch (source) {
    case InitSource::kPrior: return "prior";
    case InitSource::kScratch: return "scratch";
    case InitSource::kTemplate: return "template";
  }
  return "unknown";
}

std::string to_string(const GraphEdit& edit) {
  switch (edit.kind) {
    case EditKind::kNone: return "none";
    case EditKind::kAddEdge:
      return "add_edge(" + std::to_string(edit.role_a) + "," + std::to_string(edit.role_b) + ")";
    case EditKind::kRemoveEdge:
      return "remove_edge(" + std::to_string(edit.role_a) + "," + std::to_string(edit.role_b) + ")";
    case EditKind::kAddNode: return "add_node(" + std::to_string(edit.role_a) + ")";
    case EditKind::kRemoveNode: return "remove_node(" + std::to_string(edit.role_a) + ")";
  }
  return "unknown";
}

double EvolutionTrajectory::total_token_cost() const {
  double total = 0.0;
  for (const auto& r : rounds) total += r.token_cost;
  return total;
}

std::vector<double> idealized_residuals(double u0, double u_star, double eta,
                                        double eps, int max_rounds) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(u_star >= u0)) throw ValidationError("u_star must be at least u0");
  const double keep = 1.0 - eta;
  std::vector<double> out{u_star - u0};
  while (out.back() > eps && static_cast<int>(out.size()) - 1 < max_rounds)
    out.push_back(keep * out.back());
  return out;
}

EvolutionTrajectory evolve(const CollaborationGraph& init,
                           const CollaborationGraph& oracle,
                           const ContractionConfig& config,
                           const UtilityParams& params, Rng& rng,
                           InitSource source) {
  config.validate();
  params.validate(config.pool_size);
  require_valid(init, config.pool_size);
  require_valid(oracle, config.pool_size);
  const RoleGraph target = to_role_graph(oracle);
  RoleGraph current = to_role_graph(init);
  if (config.size_cap && current.num_nodes() + current.num_edges() > *config.size_cap)
    throw ValidationError("initial graph exceeds the size cap");

  EvolutionTrajectory out;
  out.init_source = source;
  out.u_star = utility(target, target, params);
  const double u0 = utility(current, target, params);
  out.rounds.push_back({to_graph(current), u0, 0.0, out.u_star - u0, {}});

  if (config.mode == ContractionMode::kIdealized) {
    const auto residuals = idealized_residuals(u0, out.u_star, config.contraction_eta,
                                               config.epsilon, config.max_rounds);
    const double round_cost = cost(current, params);
    for (std::size_t t = 1; t < residuals.size(); ++t)
      out.rounds.push_back({out.rounds.front().graph, out.u_star - residuals[t],
                            round_cost, residuals[t], {}});
    return out;
  }

  double u = u0;
  while (out.num_rounds() < config.max_rounds && out.u_star - u > config.epsilon) {
    std::vector<GraphEdit> moves = neighborhood(current, config.pool_size, config.size_cap);
    if (!config.exhaustive && static_cast<int>(moves.size()) > config.neighbor_samples_k) {
      for (int i = 0; i < config.neighbor_samples_k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, moves.size() - 1);
        std::swap(moves[i], moves[pick(rng)]);
      }
      moves.resize(config.neighbor_samples_k);
    }
    const GraphEdit* best = nullptr;
    double best_u = u;
    RoleGraph best_graph;
    for (const auto& m : moves) {
      const RoleGraph next = apply(current, m);
      const double nu = utility(next, target, params);
      if (nu > best_u) {
        best_u = nu;
        best = &m;
        best_graph = next;
      }
    }
    if (best == nullptr) break;
    const double round_cost = cost(current, params);
    current = best_graph;
    u = best_u;
    out.rounds.push_back({to_graph(current), u, round_cost, out.u_star - u, *best});
  }
  return out;
}

int rounds_to_eps(double u0, double u_star, double eta, double eps) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(u_star >= u0)) throw ValidationError("u_star must be at least u0");
  const double gap = u_star - u0;
  if (gap <= eps) return 0;
  if (eta == 1.0) return 1;
  const double keep = 1.0 - eta;
  int t = static_cast<int>(std::ceil(std::log(gap / eps) / std::log(1.0 / keep)));
  // The log ratio can land one ulp off an integer; settle T on the recursion.
  const auto residual = [&](int rounds) {
    double r = gap;
    for (int i = 0; i < rounds; ++i) r *= keep;
    return r;
  };
  t = std::max(t, 1);
  while (residual(t) > eps) ++t;
  while (t > 1 && residual(t - 1) <= eps) --t;
  return t;
}

int rounds_delta(double u0_prior, double u0_scratch, double u_star, double eta,
                 double eps) {
  if (!(u0_prior > u0_scratch))
    throw ValidationError("prior initialization must start above scratch");
  return rounds_to_eps(u0_prior, u_star, eta, eps) -
         rounds_to_eps(u0_scratch, u_star, eta, eps);
}

double total_token_bound(int rounds, int size_cap, double a_v, double a_e, double b) {
  if (size_cap < 1) throw ValidationError("size cap M must be at least 1");
  if (rounds < 0) throw ValidationError("round count must be non-negative");
  return rounds * ((a_v + a_e) * size_cap + b);
}

std::int64_t break_even(double train_tokens_total, double tokens_per_query_baseline,
                        double tokens_per_query_with_prior) {
  const double savings = tokens_per_query_baseline - tokens_per_query_with_prior;
  if (!(savings > 0.0))
    throw ValidationError("the prior must save tokens per query to break even");
  if (!(train_tokens_total >= 0.0))
    throw ValidationError("training token total must be non-negative");
  return static_cast<std::int64_t>(std::ceil(train_tokens_total / savings));
}

BreakEvenReport break_even_report(double train_tokens_total, double baseline,
                                  double with_prior,
                                  std::optional<double> reference_queries) {
  BreakEvenReport r;
  r.train_tokens_total = train_tokens_total;
  r.tokens_per_query_baseline = baseline;
  r.tokens_per_query_with_prior = with_prior;
  r.savings_per_query = baseline - with_prior;
  r.queries = break_even(train_tokens_total, baseline, with_prior);
  r.reference_queries = reference_queries;
  if (reference_queries && r.queries > 0)
    r.reference_relative_gap =
        (*reference_queries - static_cast<double>(r.queries)) / static_cast<double>(r.queries);
  return r;
}

nlohmann::json to_json(const BreakEvenReport& r) {
  nlohmann::json j = {{"train_tokens_total", r.train_tokens_total},
                      {"tokens_per_query_baseline", r.tokens_per_query_baseline},
                      {"tokens_per_query_with_prior", r.tokens_per_query_with_prior},
                      {"savings_per_query", r.savings_per_query},
                      {"break_even_queries", r.queries}};
  if (r.reference_queries) {
    char pct[32];
    std::snprintf(pct, sizeof(pct), "%.2f%%", 100.0 * std::abs(r.reference_relative_gap));
    j["reference_queries"] = *r.reference_queries;
    j["reference_relative_gap"] = r.reference_relative_gap;
    j["discrepancy"] = r.reference_relative_gap == 0.0
                           ? std::string("none")
                           : "reference figure differs from the computed ceiling by " +
                                 std::string(pct);
  }
  return j;
}

namespace {

struct ProbeSplit {
  Eigen::MatrixXd train;
  Eigen::MatrixXd test;
};

ProbeSplit split_rows(const Eigen::MatrixXd& x, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, 0x5911, static_cast<std::uint64_t>(x.rows())));
  std::shuffle(order.begin(), order.end(), rng);
  const Eigen::Index n_train = x.rows() / 2;
  ProbeSplit s{Eigen::MatrixXd(n_train, x.cols()),
               Eigen::MatrixXd(x.rows() - n_train, x.cols())};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (i < n_train)
      s.train.row(i) = x.row(order[i]);
    else
      s.test.row(i - n_train) = x.row(order[i]);
  }
  return s;
}

}  // namespace

double proxy_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        std::uint64_t seed) {
  if (a.rows() < 50 || b.rows() < 50)
    throw ValidationError("proxy divergence needs at least 50 samples per side");
  if (a.cols() != b.cols() || a.cols() == 0)
    throw ValidationError("both samples must share a non-zero dimension");
  ProbeSplit sa = split_rows(a, seed);
  ProbeSplit sb = split_rows(b, seed);

  // Standardize with pooled training statistics (order-free sums keep the
  // result symmetric in a and b).
  const double n_pool = static_cast<double>(sa.train.rows() + sb.train.rows());
  const Eigen::RowVectorXd mean =
      (sa.train.colwise().sum() + sb.train.colwise().sum()) / n_pool;
  const Eigen::RowVectorXd var =
      ((sa.train.rowwise() - mean).array().square().colwise().sum() +
       (sb.train.rowwise() - mean).array().square().colwise().sum()) / n_pool;
  const Eigen::RowVectorXd scale =
      var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
  for (ProbeSplit* s : {&sa, &sb}) {
    s->train = (s->train.rowwise() - mean).array().rowwise() * scale.array();
    s->test = (s->test.rowwise() - mean).array().rowwise() * scale.array();
  }

  // Balanced logistic loss, labels +1 for a and -1 for b, by gradient descent.
  const double weight_a = 0.5 / static_cast<double>(sa.train.rows());
  const double weight_b = 0.5 / static_cast<double>(sb.train.rows());
  const double l2 = 1e-3;
  double max_sq = 0.0;
  for (const auto* x : {&sa.train, &sb.train})
    max_sq = std::max(max_sq, x->rowwise().squaredNorm().maxCoeff());
  const double lr = 1.0 / (0.25 * (max_sq + 1.0) + l2);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(a.cols());
  double bias = 0.0;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd sa_scores = (sa.train * w).array() + bias;
    const Eigen::VectorXd sb_scores = (sb.train * w).array() + bias;
    const Eigen::VectorXd ca =
        sa_scores.unaryExpr([&](double s) { return -weight_a * sigmoid(-s); });
    const Eigen::VectorXd cb =
        sb_scores.unaryExpr([&](double s) { return weight_b * sigmoid(s); });
    const Eigen::VectorXd gw = sa.train.transpose() * ca + sb.train.transpose() * cb;
    const double gb = ca.sum() + cb.sum();
    w -= lr * (gw + l2 * w);
    bias -= lr * gb;
  }

  const auto side_error = [&](const Eigen::MatrixXd& test, double sign) {
    const Eigen::VectorXd s = sign * ((test * w).array() + bias).matrix();
    double errors = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      errors += s[i] < 0.0 ? 1.0 : (s[i] == 0.0 ? 0.5 : 0.0);
    return errors / static_cast<double>(s.size());
  };
  const double e = 0.5 * (side_error(sa.test, 1.0) + side_error(sb.test, -1.0));
  return std::max(0.0, 2.0 * (1.0 - 2.0 * e));
}

CollaborationGraph random_graph(int pool_size, Rng& rng, double edge_probability) {
  if (pool_size < 1) throw ValidationError("pool_size must be at least 1");
  const int n = std::uniform_int_distribution<int>(1, pool_size)(rng);
  std::vector<int> roles(pool_size);
  std::iota(roles.begin(), roles.end(), 0);
  std::shuffle(roles.begin(), roles.end(), rng);
  CollaborationGraph g;
  g.roles.assign(roles.begin(), roles.begin() + n);
  std::bernoulli_distribution keep(edge_probability);
  for (int t = 1; t < n; ++t)
    for (int s = 0; s < t; ++s)
      if (keep(rng)) g.edges.push_back({s, t});
  return canonicalize(g);
}

CollaborationGraph random_graph_capped(int pool_size, int size_cap, Rng& rng) {
  if (size_cap < 1) throw ValidationError("size cap must be at least 1");
  RoleGraph g = to_role_graph(random_graph(pool_size, rng));
  while (g.num_nodes() + g.num_edges() > size_cap && g.num_edges() > 0)
    remove_random_edge(g, rng);
  while (g.num_nodes() > size_cap) {
    std::vector<int> present;
    for (int r = 0; r < kMaxRoles; ++r)
      if ((g.nodes >> r) & 1U) present.push_back(r);
    g.nodes &= ~(1U << present[std::uniform_int_distribution<std::size_t>(
                     0, present.size() - 1)(rng)]);
  }
  return to_graph(g);
}

void write_trajectory_jsonl(std::ostream& out, const EvolutionTrajectory& trajectory,
                            const std::string& query_id) {
  for (std::size_t t = 0; t < trajectory.rounds.size(); ++t) {
    const auto& r = trajectory.rounds[t];
    nlohmann::json line = {{"query_id", query_id},
                           {"init_source", std::string(to_string(trajectory.init_source))},
                           {"round", t},
                           {"utility", r.utility},
                           {"token_cost", r.token_cost},
                           {"residual", r.residual},
                           {"edit", to_string(r.edit)},
                           {"num_nodes", r.graph.num_nodes()},
                           {"num_edges", r.graph.num_edges()}};
    out << line.dump() << '\n';
  }
}

nlohmann::json run_theory_checks(const TheoryConfig& config) {
  nlohmann::json report;
  bool all_pass = true;

  nlohmann::json idealized = nlohmann::json::array();
  nlohmann::json prior_gaps = nlohmann::json::array();
  for (const double gap : config.gaps)
    for (const double eta : config.etas)
      for (const double eps : config.epsilons) {
        const double u_star = 1.0;
        const int predicted = rounds_to_eps(u_star - gap, u_star, eta, eps);
        const auto residuals = idealized_residuals(u_star - gap, u_star, eta, eps, 100000);
        const int measured = static_cast<int>(residuals.size()) - 1;
        double at_t = gap;
        for (int t = 0; t < predicted; ++t) at_t *= 1.0 - eta;
        const bool pass = measured <= predicted && at_t <= eps;
        all_pass = all_pass && pass;
        idealized.push_back({{"gap", gap}, {"eta", eta}, {"eps", eps},
                             {"predicted_rounds", predicted},
                              {"measured_rounds", measured},
                             {"residual_at_predicted", at_t},
                             {"slack", predicted - measured},
                             {"pass", pass}});

        const double u_prior = u_star - 0.5 * gap;
        const int delta = rounds_delta(u_prior, u_star - gap, u_star, eta, eps);
        const int measured_prior =
            static_cast<int>(idealized_residuals(u_prior, u_star, eta, eps, 100000).size()) - 1;
        const bool c_pass = delta <= 0 && measured_prior <= measured;
        all_pass = all_pass && c_pass;
        prior_gaps.push_back({{"gap_scratch", gap}, {"gap_prior", 0.5 * gap},
                              {"eta", eta}, {"eps", eps}, {"rounds_delta", delta},
                              {"measured_rounds_prior", measured_prior},
                              {"measured_rounds_scratch", measured},
                              {"pass", c_pass}});
      }
  report["idealized"] = idealized;
  report["prior_gaps"] = prior_gaps;

  {
    Rng rng(derive_seed(config.seed, 0x70b0));
    ContractionConfig cc;
    cc.size_cap = config.size_cap;
    int violations = 0;
    double max_ratio = 0.0;
    const UtilityParams& p = config.utility;
    for (int i = 0; i < config.token_trajectories; ++i) {
      const CollaborationGraph init = random_graph_capped(cc.pool_size, config.size_cap, rng);
      const CollaborationGraph oracle = random_graph(cc.pool_size, rng, 0.3);
      const auto traj = evolve(init, oracle, cc, p, rng);
      const double bound = total_token_bound(traj.num_rounds(), config.size_cap,
                                             p.a_v, p.a_e, p.b);
      const double measured = traj.total_token_cost();
      if (measured > bound) ++violations;
      if (bound > 0.0) max_ratio = std::max(max_ratio, measured / bound);
    }
    const bool pass = violations == 0;
    all_pass = all_pass && pass;
    report["token_bound"] = {{"trajectories", config.token_trajectories},
                             {"size_cap", config.size_cap},
                             {"violations", violations},
                             {"max_measured_over_bound", max_ratio},
                             {"pass", pass}};
  }

  {
    Rng rng(derive_seed(config.seed, 0xd17e));
    const int n = config.divergence_samples;
    const int d = config.divergence_dim;
    const Eigen::MatrixXd x = standard_normal(rng, n, d);
    const Eigen::MatrixXd y = standard_normal(rng, n, d);
    Eigen::MatrixXd shifted = standard_normal(rng, n, d);
    shifted.col(0).array() += 10.0;
    const double same = proxy_divergence(x, y, config.seed);
    const double separable = proxy_divergence(x, shifted, config.seed);
    const bool pass = same < 0.15 && separable > 1.9;
    all_pass = all_pass && pass;
    report["divergence"] = {{"identical", same}, {"separable", separable},
                            {"unidentifiable_terms", "ideal joint error is not observable"},
                            {"pass", pass}};
  }
  report["all_pass"] = all_pass;
  return report;
}

}  // namespace topoprior
