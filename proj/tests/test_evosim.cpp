#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "topoprior/error.hpp"
#include "topoprior/evosim.hpp"
#include "topoprior/nn.hpp"

using namespace topoprior;

namespace {

CollaborationGraph graph(std::vector<int> roles, std::vector<Edge> edges) {
  CollaborationGraph g;
  g.roles = std::move(roles);
  g.edges = std::move(edges);
  return g;
}

// Straightforward set-based F1 over unordered role pairs.
double naive_f1(const CollaborationGraph& g, const CollaborationGraph& ref) {
  const auto pairs = [](const CollaborationGraph& x) {
    std::set<std::pair<int, int>> out;
    for (const auto& e : x.edges) {
      const int a = x.roles[static_cast<std::size_t>(e.source)];
      const int b = x.roles[static_cast<std::size_t>(e.target)];
      out.insert({std::min(a, b), std::max(a, b)});
    }
    return out;
  };
  const auto p = pairs(g);
  const auto r = pairs(ref);
  if (p.empty() && r.empty()) return 1.0;
  if (p.empty() || r.empty()) return 0.0;
  double hit = 0.0;
  for (const auto& e : p) hit += r.count(e);
  if (hit == 0.0) return 0.0;
  const double precision = hit / static_cast<double>(p.size());
  const double recall = hit / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

const CollaborationGraph kChain4 = graph({0, 1, 2, 3}, {{0, 1}, {1, 2}, {2, 3}});

}  // namespace

TEST(EdgeF1, Examples) {
  EXPECT_EQ(edge_f1(kChain4, kChain4), 1.0);
  EXPECT_EQ(edge_f1(graph({}, {}), graph({}, {})), 1.0);
  EXPECT_EQ(edge_f1(graph({0}, {}), kChain4), 0.0);
  EXPECT_EQ(edge_f1(kChain4, graph({0, 1}, {})), 0.0);
  // Two of four predicted pairs hit two of four reference pairs.
  const CollaborationGraph ref = graph({0, 1, 2, 3, 4}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  const CollaborationGraph half = graph({0, 1, 2, 5, 6}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  EXPECT_DOUBLE_EQ(edge_f1(half, ref), 0.5);
  // Direction and node order do not matter, only role pairs.
  const CollaborationGraph reordered = graph({3, 2, 1, 0}, {{0, 1}, {1, 2}, {2, 3}});
  EXPECT_EQ(edge_f1(reordered, kChain4), 1.0);
}

TEST(EdgeF1, MatchesNaiveOracle) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_graph(13, rng);
    const auto b = random_graph(13, rng, 0.3);
    EXPECT_NEAR(edge_f1(a, b), naive_f1(a, b), 1e-12);
    EXPECT_NEAR(edge_f1(a, b), edge_f1(b, a), 1e-12);
  }
}

TEST(Utility, CostAndTradeOff) {
  const UtilityParams p;
  EXPECT_EQ(token_cost(kChain4, p), 10.0 * 4 + 5.0 * 3 + 2.0);
  EXPECT_EQ(token_cost(graph({0, 1, 2}, {{0, 1}, {1, 2}}), p), 42.0);
  EXPECT_EQ(token_cost(graph({}, {}), p), p.b);
  EXPECT_DOUBLE_EQ(utility(kChain4, kChain4, p), 1.0 - 0.1 * 57.0 / 522.0);
  EXPECT_EQ(perf(kChain4, kChain4), 1.0);

  UtilityParams q;
  q.lambda = 1.0;
  q.c_max = 570.0;
  EXPECT_DOUBLE_EQ(utility(kChain4, kChain4, q), 0.9);

  // Complete 13-role graph costs exactly the default c_max.
  CollaborationGraph full;
  for (int r = 0; r < 13; ++r) full.roles.push_back(r);
  for (int t = 1; t < 13; ++t)
    for (int s = 0; s < t; ++s) full.edges.push_back({s, t});
  EXPECT_EQ(token_cost(full, p), p.c_max);

  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const double u = utility(random_graph(13, rng), kChain4, p);
    EXPECT_GE(u, -p.lambda);
    EXPECT_LE(u, 1.0);
  }
  UtilityParams small;
  small.c_max = 100.0;
  EXPECT_THROW(small.validate(13), ConfigError);
}

TEST(Rounds, ClosedFormExamples) {
  EXPECT_EQ(rounds_to_eps(0.0, 1.0, 0.5, 0.2), 3);
  EXPECT_EQ(rounds_to_eps(0.9, 1.0, 0.5, 0.2), 0);
  EXPECT_EQ(rounds_to_eps(0.0, 1.0, 1.0, 0.2), 1);
  // 0.5 needs 2 halvings to reach 0.125 <= 0.2, 1.0 needs 3.
  EXPECT_EQ(rounds_delta(0.5, 0.0, 1.0, 0.5, 0.2), -1);
  EXPECT_EQ(rounds_delta(1.0, 0.0, 1.0, 0.5, 0.2), -3);
  EXPECT_THROW(rounds_delta(0.0, 0.0, 1.0, 0.5, 0.2), ValidationError);
  EXPECT_THROW(rounds_to_eps(0.0, 1.0, 0.0, 0.2), ValidationError);
  EXPECT_THROW(rounds_to_eps(0.0, 1.0, 0.5, 0.0), ValidationError);
  EXPECT_THROW(rounds_to_eps(1.0, 0.5, 0.5, 0.1), ValidationError);
}

TEST(Rounds, ClosedFormAgreesWithRecursion) {
  for (const double gap : {0.01, 0.25, 0.5, 1.0, 1.7})
    for (const double eta : {0.05, 0.1, 0.3, 0.5, 0.9, 1.0})
      for (const double eps : {0.2, 0.05, 0.01, 1e-4}) {
        const auto r = idealized_residuals(0.0, gap, eta, eps, 100000);
        EXPECT_EQ(static_cast<int>(r.size()) - 1, rounds_to_eps(0.0, gap, eta, eps));
        EXPECT_LE(r.back(), eps);
        for (std::size_t t = 1; t < r.size(); ++t) {
          EXPECT_EQ(r[t], (1.0 - eta) * r[t - 1]);
          EXPECT_GT(r[t - 1], eps);
        }
      }
}

TEST(Rounds, TokenBound) {
  EXPECT_EQ(total_token_bound(3, 12, 10.0, 5.0, 2.0), 3 * (15.0 * 12 + 2.0));
  EXPECT_EQ(total_token_bound(1, 4, 10.0, 5.0, 6.0), 66.0);
  EXPECT_EQ(total_token_bound(0, 12, 10.0, 5.0, 2.0), 0.0);
  EXPECT_THROW(total_token_bound(1, 0, 10.0, 5.0, 2.0), ValidationError);
  EXPECT_THROW(total_token_bound(-1, 3, 10.0, 5.0, 2.0), ValidationError);
}

TEST(BreakEven, Examples) {
  EXPECT_EQ(break_even(1200.0 * 100000.0, 800.0, 478.0), 372671);
  EXPECT_EQ(break_even(100.0, 200.0, 100.0), 1);
  EXPECT_EQ(break_even(0.0, 200.0, 100.0), 0);
  EXPECT_THROW(break_even(100.0, 100.0, 100.0), ValidationError);
  EXPECT_THROW(break_even(100.0, 100.0, 150.0), ValidationError);

  const BreakEvenReport r = break_even_report(1.2e8, 800.0, 478.0, 373670.0);
  EXPECT_EQ(r.queries, 372671);
  EXPECT_EQ(r.savings_per_query, 322.0);
  EXPECT_NEAR(r.reference_relative_gap, (373670.0 - 372671.0) / 372671.0, 1e-12);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("break_even_queries"), 372671);
  EXPECT_FALSE(to_json(break_even_report(1.2e8, 800.0, 478.0, std::nullopt))
                   .contains("discrepancy"));
}

TEST(Divergence, SanityCases) {
  Rng rng(3);
  const Mat a = standard_normal(rng, 300, 8);
  const Mat b = standard_normal(rng, 300, 8);
  Mat shifted = standard_normal(rng, 300, 8);
  shifted.col(0).array() += 12.0;
  EXPECT_LT(proxy_divergence(a, b, 4), 0.4);
  EXPECT_GT(proxy_divergence(a, shifted, 4), 1.9);
  EXPECT_EQ(proxy_divergence(a, shifted, 4), proxy_divergence(shifted, a, 4));
  EXPECT_EQ(proxy_divergence(a, b, 4), proxy_divergence(b, a, 4));
  const double d = proxy_divergence(a, b, 5);
  EXPECT_GE(d, 0.0);
  EXPECT_LE(d, 2.0);
  EXPECT_THROW(proxy_divergence(a.topRows(49), b, 0), ValidationError);
  EXPECT_THROW(proxy_divergence(a, b.leftCols(3), 0), ValidationError);
}

TEST(RandomGraphs, ValidAndCapped) {
  Rng rng(6);
  double edges = 0.0;
  double possible = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const auto g = random_graph(13, rng);
    ASSERT_TRUE(validate(g, 13).empty());
    ASSERT_GE(g.num_nodes(), 1);
    edges += g.num_edges();
    possible += g.num_nodes() * (g.num_nodes() - 1) / 2.0;
    const auto c = random_graph_capped(13, 12, rng);
    ASSERT_TRUE(validate(c, 13).empty());
    ASSERT_LE(c.num_nodes() + c.num_edges(), 12);
  }
  EXPECT_NEAR(edges / possible, 0.5, 0.02);
}

TEST(Evolve, IdealizedModeFollowsRecursion) {
  ContractionConfig c;
  c.mode = ContractionMode::kIdealized;
  c.contraction_eta = 0.3;
  c.epsilon = 0.01;
  const UtilityParams p;
  Rng rng(7);
  const auto init = graph({0, 5}, {{0, 1}});
  const auto traj = evolve(init, kChain4, c, p, rng);
  const auto expect = idealized_residuals(utility(init, kChain4, p), traj.u_star, 0.3, 0.01,
                                          c.max_rounds);
  ASSERT_EQ(traj.rounds.size(), expect.size());
  for (std::size_t t = 0; t < expect.size(); ++t) {
    EXPECT_EQ(traj.rounds[t].residual, expect[t]);
    EXPECT_NEAR(traj.rounds[t].utility, traj.u_star - expect[t], 1e-12);
  }
  EXPECT_EQ(traj.num_rounds(),
            rounds_to_eps(utility(init, kChain4, p), traj.u_star, 0.3, 0.01));
}

TEST(Evolve, LocalSearchImprovesMonotonically) {
  const ContractionConfig c;
  const UtilityParams p;
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto init = random_graph(13, rng);
    const auto traj = evolve(init, kChain4, c, p, rng);
    EXPECT_EQ(traj.rounds.front().graph, init);
    EXPECT_EQ(traj.rounds.front().token_cost, 0.0);
    double spent = 0.0;
    for (std::size_t t = 1; t < traj.rounds.size(); ++t) {
      EXPECT_GT(traj.rounds[t].utility, traj.rounds[t - 1].utility);
      EXPECT_EQ(traj.rounds[t].token_cost, token_cost(traj.rounds[t - 1].graph, p));
      EXPECT_NE(traj.rounds[t].edit.kind, EditKind::kNone);
      EXPECT_TRUE(validate(traj.rounds[t].graph, 13).empty());
      EXPECT_NEAR(traj.rounds[t].residual, traj.u_star - traj.rounds[t].utility, 1e-12);
      spent += traj.rounds[t].token_cost;
    }
    EXPECT_NEAR(traj.total_token_cost(), spent, 1e-9);
    EXPECT_LE(traj.num_rounds(), c.max_rounds);
  }
}

TEST(Evolve, OracleStartNeedsNoRounds) {
  Rng rng(9);
  const auto traj = evolve(kChain4, kChain4, ContractionConfig{}, UtilityParams{}, rng,
                           InitSource::kPrior);
  EXPECT_EQ(traj.num_rounds(), 0);
  EXPECT_EQ(traj.total_token_cost(), 0.0);
  EXPECT_EQ(traj.init_source, InitSource::kPrior);
}

TEST(Evolve, ExhaustiveSearchReachesOracle) {
  ContractionConfig c;
  c.exhaustive = true;
  c.max_rounds = 1000;
  c.epsilon = 1e-9;
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const auto traj = evolve(random_graph(13, rng), kChain4, c, UtilityParams{}, rng);
    EXPECT_EQ(edge_f1(traj.terminal_graph(), kChain4), 1.0);
  }
}

TEST(Evolve, CappedTrajectoriesRespectTokenBound) {
  ContractionConfig c;
  c.size_cap = 12;
  const UtilityParams p;
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto oracle = random_graph_capped(13, 12, rng);
    const auto traj = evolve(random_graph_capped(13, 12, rng), oracle, c, p, rng);
    for (const auto& r : traj.rounds) EXPECT_LE(r.graph.num_nodes() + r.graph.num_edges(), 12);
    EXPECT_LE(traj.total_token_cost(),
              total_token_bound(traj.num_rounds(), 12, p.a_v, p.a_e, p.b) + 1e-9);
  }
  EXPECT_THROW(evolve(random_graph(13, rng, 1.0), kChain4, ContractionConfig{.size_cap = 2},
                      p, rng),
               ValidationError);
}

TEST(Evolve, RejectsInvalidInputs) {
  Rng rng(12);
  const auto bad = graph({0, 0}, {});
  EXPECT_THROW(evolve(bad, kChain4, ContractionConfig{}, UtilityParams{}, rng), ValidationError);
  ContractionConfig c;
  c.neighbor_samples_k = 0;
  EXPECT_THROW(evolve(kChain4, kChain4, c, UtilityParams{}, rng), ConfigError);
}

TEST(Evolve, TrajectoryJsonl) {
  Rng rng(13);
  const auto traj = evolve(graph({0}, {}), kChain4, ContractionConfig{}, UtilityParams{}, rng);
  std::ostringstream out;
  write_trajectory_jsonl(out, traj, "q7");
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("query_id"), "q7");
    EXPECT_EQ(j.at("round"), n);
    ++n;
  }
  EXPECT_EQ(n, traj.num_rounds() + 1);
}

TEST(TheoryChecks, SmallConfigurationPasses) {
  TheoryConfig c;
  c.token_trajectories = 100;
  c.divergence_samples = 200;
  const auto report = run_theory_checks(c);
  EXPECT_TRUE(report.at("all_pass").get<bool>()) << report.dump(2);
}
