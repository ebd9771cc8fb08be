#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "topoprior/embeddings.hpp"
#include "topoprior/error.hpp"
#include "topoprior/evosim.hpp"
#include "topoprior/model.hpp"
#include "topoprior/training.hpp"

using namespace topoprior;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.embed_dim = 16;
  c.hidden_dim = 12;
  c.latent_dim = 6;
  c.edge_hidden_dim = 10;
  c.prior_hidden_dim = 9;
  c.discriminator_hidden_dim = 7;
  return c;
}

/// Loop-based GCN layer: out[i][k] = relu(sum_j sum_c A[i][j] H[j][c] W[c][k]).
Mat naive_gcn_layer(const Mat& a, const Mat& h, const Mat& w) {
  Mat out = Mat::Zero(a.rows(), w.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index c = 0; c < h.cols(); ++c) s += a(i, j) * h(j, c) * w(c, k);
      out(i, k) = std::max(s, 0.0);
    }
  return out;
}

}  // namespace

TEST(Gcn, ZeroWeightsGiveZeroEmbeddings) {
  const ModelConfig c = small_config();
  const EncoderParams p(c);
  Rng rng(1);
  const Mat a = normalize_adjacency(to_adjacency(CollaborationGraph{{0, 2}, {{0, 1}}}, 13));
  const Mat h0 = standard_normal(rng, 13, c.embed_dim);
  EXPECT_EQ(gcn_forward(a, h0, p).cwiseAbs().sum(), 0.0);
}

TEST(Gcn, SingleNodeIdentityWeights) {
  ModelConfig c = small_config();
  c.hidden_dim = c.embed_dim;
  EncoderParams p(c);
  p.gcn0.setIdentity();
  p.gcn1.setIdentity();
  Rng rng(2);
  const Mat a = normalize_adjacency(to_adjacency(CollaborationGraph{{0}, {}}, 1));
  const Mat feature = standard_normal(rng, 1, c.embed_dim);
  EXPECT_EQ(gcn_forward(a, feature, p), relu(feature));
}

TEST(Gcn, MatchesLoopOracleOnRandomGraphs) {
  const ModelConfig c = small_config();
  Rng rng(3);
  EncoderParams p(c);
  p.initialize(rng);
  const Mat roles = standard_normal(rng, 13, c.embed_dim);
  for (int trial = 0; trial < 20; ++trial) {
    CollaborationGraph g;
    while (g.num_nodes() != 4) g = random_graph(13, rng);
    const auto adj = to_adjacency(g, 13);
    const Mat a = normalize_adjacency(adj);
    const Mat h0 = initial_node_features(adj.occupied, roles);
    const Mat expect = naive_gcn_layer(a, naive_gcn_layer(a, h0, p.gcn0), p.gcn1);
    EXPECT_LT((gcn_forward(a, h0, p) - expect).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Gcn, ShapeMismatchIsConfigError) {
  const EncoderParams p(small_config());
  EXPECT_THROW(gcn_forward(Mat::Identity(3, 3), Mat::Zero(4, 16), p), ConfigError);
  EXPECT_THROW(gcn_forward(Mat::Identity(3, 3), Mat::Zero(3, 5), p), ConfigError);
}

TEST(Pool, SumsOccupiedRows) {
  Mat nodes(3, 2);
  nodes << 1, 2, 9, 9, 3, 4;
  EXPECT_EQ(pool_graph(nodes, {true, false, true}), (Vec(2) << 4, 6).finished());
  EXPECT_EQ(pool_graph(nodes, {false, true, false}), nodes.row(1).transpose());
}

TEST(Pool, InvariantToNodeOrder) {
  const ModelConfig c = small_config();
  Rng rng(4);
  EncoderParams p(c);
  p.initialize(rng);
  const Mat roles = standard_normal(rng, 13, c.embed_dim);
  for (int trial = 0; trial < 20; ++trial) {
    const CollaborationGraph g = random_graph(13, rng);
    std::vector<int> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CollaborationGraph h;  // node perm[i] of g becomes node i of h
    std::vector<int> where(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      h.roles.push_back(g.roles[perm[i]]);
      where[perm[i]] = static_cast<int>(i);
    }
    for (const auto& e : g.edges) {
      const int s = where[e.source];
      const int t = where[e.target];
      h.edges.push_back({std::min(s, t), std::max(s, t)});
    }
    const auto embed = [&](const CollaborationGraph& x) {
      const auto adj = to_adjacency(x, 13);
      Mat a = normalize_adjacency(adj);
      return pool_graph(gcn_forward(a, initial_node_features(adj.occupied, roles), p),
                        adj.occupied);
    };
    EXPECT_LT((embed(g) - embed(h)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Fuse, ZeroParamsGiveZero) {
  const ModelConfig c = small_config();
  const EncoderParams p(c);
  Rng rng(5);
  EXPECT_EQ(fuse(standard_normal(rng, c.embed_dim), standard_normal(rng, c.hidden_dim), p),
            Vec::Zero(c.hidden_dim));
}

TEST(Fuse, IdentityLikeFirstLayerOracle) {
  const ModelConfig c = small_config();
  EncoderParams p(c);
  Rng rng(6);
  p.initialize(rng);
  // fuse1 copies the leading hidden_dim entries of (h_q || h_G).
  p.fuse1.weight = Mat::Identity(c.hidden_dim, c.embed_dim + c.hidden_dim);
  p.fuse1.bias.setZero();
  p.fuse2.bias.setZero();
  const Vec hq = standard_normal(rng, c.embed_dim);
  const Vec hg = standard_normal(rng, c.hidden_dim);
  Vec joint(c.embed_dim + c.hidden_dim);
  joint << hq, hg;
  const Vec expect = p.fuse2.weight * relu(Vec(joint.head(c.hidden_dim)));
  EXPECT_LT((fuse(hq, hg, p) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, GeneralOracleAndOrderSensitivity) {
  ModelConfig c = small_config();
  c.hidden_dim = c.embed_dim;  // allow swapping the halves
  EncoderParams p(c);
  Rng rng(7);
  p.initialize(rng);
  p.fuse1.bias = standard_normal(rng, c.hidden_dim);
  const Vec a = standard_normal(rng, c.embed_dim);
  const Vec b = standard_normal(rng, c.hidden_dim);
  Vec joint(a.size() + b.size());
  joint << a, b;
  const Vec expect = p.fuse2.apply((p.fuse1.weight * joint + p.fuse1.bias).cwiseMax(0.0));
  EXPECT_LT((fuse(a, b, p) - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((fuse(a, b, p) - fuse(b, a, p)).norm(), 1e-6);
  EXPECT_THROW(fuse(Vec::Zero(3), b, p), ConfigError);
}

TEST(Posterior, ZeroWeightsReturnBiases) {
  const ModelConfig c = small_config();
  EncoderParams p(c);
  Rng rng(8);
  p.mu_head.bias = standard_normal(rng, c.latent_dim);
  p.logvar_head.bias = standard_normal(rng, c.latent_dim);
  for (const Vec& h : {Vec(Vec::Zero(c.hidden_dim)), Vec(standard_normal(rng, c.hidden_dim))}) {
    const auto post = posterior(h, p);
    EXPECT_EQ(post.mu, p.mu_head.bias);
    EXPECT_EQ(post.logvar, p.logvar_head.bias);
  }
}

TEST(Posterior, AffineOracleAndClamp) {
  const ModelConfig c = small_config();
  EncoderParams p(c);
  Rng rng(9);
  p.initialize(rng);
  const Vec h = standard_normal(rng, c.hidden_dim);
  const auto post = posterior(h, p);
  EXPECT_LT((post.mu - (p.mu_head.weight * h + p.mu_head.bias)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((post.logvar - (p.logvar_head.weight * h + p.logvar_head.bias)).cwiseAbs().maxCoeff(),
            1e-12);
  p.logvar_head.bias = Vec::Constant(c.latent_dim, 50.0);
  p.logvar_head.bias[0] = -50.0;
  const auto clamped = posterior(Vec::Zero(c.hidden_dim), p);
  EXPECT_EQ(clamped.logvar.maxCoeff(), 10.0);
  EXPECT_EQ(clamped.logvar[0], -10.0);
  EXPECT_TRUE((clamped.sigma().array() > 0.0).all());
}

TEST(SampleZ, ReparameterizationExamples) {
  Rng rng(10);
  const PosteriorGaussian post{standard_normal(rng, 5), Vec::Zero(5)};
  EXPECT_EQ(sample_z(post, Vec::Zero(5)), post.mu);
  EXPECT_EQ(sample_z(post, Vec::Ones(5)), (post.mu.array() + 1.0).matrix());
}

TEST(SampleZ, MonteCarloMean) {
  Rng rng(11);
  PosteriorGaussian post{standard_normal(rng, 4), standard_normal(rng, 4)};
  const int n = 100000;
  Vec sum = Vec::Zero(4);
  for (int i = 0; i < n; ++i) sum += sample_z(post, standard_normal(rng, 4));
  const Vec mean = sum / n;
  for (int j = 0; j < 4; ++j)
    EXPECT_LT(std::abs(mean[j] - post.mu[j]), 3.0 * post.sigma()[j] / std::sqrt(double(n)));
}

TEST(EncodeRecord, PosteriorMatchesPipeline) {
  ModelConfig c = small_config();
  SyntheticEmbedder embedder(SyntheticEmbedderConfig{c.embed_dim});
  const Mat roles = embedder.embed_pool(RolePool::standard());
  const TopoPriorModel model = TopoPriorModel::initialized(c, 12);
  const DatasetRecord rec{std::string("domain:1 role:4 w2"), 1, {{6, 4, 2}, {{0, 1}, {1, 2}}},
                          0.5, 3u};
  const EncodedRecord enc = encode_record(rec, embedder, c);
  EXPECT_EQ(enc.graph, canonicalize(rec.graph));
  const auto adj = to_adjacency(canonicalize(rec.graph), 13);
  const Mat nodes = gcn_forward(normalize_adjacency(adj),
                                initial_node_features(adj.occupied, roles), model.encoder);
  const auto expect =
      posterior(fuse(embedder.embed_query(rec.query), pool_graph(nodes, adj.occupied),
                     model.encoder),
                model.encoder);
  const auto got = encode_posterior(model, roles, enc);
  EXPECT_LT((got.mu - expect.mu).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((got.logvar - expect.logvar).cwiseAbs().maxCoeff(), 1e-12);
  // Determinism: identical inputs give identical z.
  const Vec eps = Vec::LinSpaced(c.latent_dim, -1.0, 1.0);
  EXPECT_EQ(sample_z(got, eps), sample_z(encode_posterior(model, roles, enc), eps));
}

TEST(EncodeRecord, RejectsWrongEmbeddingWidth) {
  SyntheticEmbedder embedder(SyntheticEmbedderConfig{8});
  const DatasetRecord rec{std::string("q"), 0, {{1}, {}}, std::nullopt, std::nullopt};
  EXPECT_THROW(encode_record(rec, embedder, small_config()), Error);
}

TEST(EncoderGradients, MatchCentralDifferences) {
  const ModelConfig c = small_config();
  SyntheticEmbedder embedder(SyntheticEmbedderConfig{c.embed_dim});
  const Mat roles = embedder.embed_pool(RolePool::standard());
  const TopoPriorModel model = TopoPriorModel::initialized(c, 13);
  std::vector<EncodedRecord> recs;
  recs.push_back(encode_record({std::string("domain:0 a"), 0, {{0, 7, 9}, {{0, 1}, {1, 2}}}, 0.4, 1u},
                               embedder, c));
  recs.push_back(
      encode_record({std::string("domain:2 b"), 2, {{2, 3, 5, 12}, {{0, 1}, {0, 2}, {1, 3}}}, 0.9, 2u},
                    embedder, c));
  std::vector<const EncodedRecord*> batch = {&recs[0], &recs[1]};
  Rng rng(14);
  const Mat eps = standard_normal(rng, 2, c.latent_dim);
  GradcheckOptions opt;
  opt.coordinates_per_block = 40;
  const auto report = gradcheck(model, roles, batch, eps, {0.5, 0.5, -0.1}, opt);
  int encoder_blocks = 0;
  for (const auto& b : report.blocks) {
    if (b.name.rfind("encoder.", 0) == 0) ++encoder_blocks;
    EXPECT_LT(b.max_relative_error, 1e-4) << b.name;
  }
  EXPECT_EQ(encoder_blocks, 10);
}
