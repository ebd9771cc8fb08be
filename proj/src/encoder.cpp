#include "topoprior/encoder.hpp"

#include "topoprior/error.hpp"

namespace topoprior {

EncoderParams::EncoderParams(const ModelConfig& c)
    : gcn0(Mat::Zero(c.embed_dim, c.hidden_dim)),
      gcn1(Mat::Zero(c.hidden_dim, c.hidden_dim)),
      fuse1(c.embed_dim + c.hidden_dim, c.hidden_dim),
      fuse2(c.hidden_dim, c.hidden_dim),
      mu_head(c.hidden_dim, c.latent_dim),
      logvar_head(c.hidden_dim, c.latent_dim) {}

void EncoderParams::initialize(Rng& rng) {
  init_fan_in(gcn0, static_cast<int>(gcn0.rows()), rng);
  init_fan_in(gcn1, static_cast<int>(gcn1.rows()), rng);
  init_fan_in(fuse1.weight, fuse1.in_dim(), rng);
  init_fan_in(fuse2.weight, fuse2.in_dim(), rng);
  init_fan_in(mu_head.weight, mu_head.in_dim(), rng);
  init_fan_in(logvar_head.weight, logvar_head.in_dim(), rng);
}

Mat initial_node_features(const std::vector<bool>& occupied,
                          const Mat& role_embeddings) {
  Mat h0 = Mat::Zero(role_embeddings.rows(), role_embeddings.cols());
  for (Eigen::Index r = 0; r < role_embeddings.rows(); ++r)
    if (occupied.at(r)) h0.row(r) = role_embeddings.row(r);
  return h0;
}

Mat gcn_forward(const Mat& a_norm, const Mat& h0, const EncoderParams& params) {
  if (a_norm.rows() != a_norm.cols() || a_norm.rows() != h0.rows())
    throw ConfigError("adjacency and node features disagree on node count");
  if (h0.cols() != params.gcn0.rows())
    throw ConfigError("node feature width does not match GCN layer 0");
  Mat h1 = relu(Mat(a_norm * (h0 * params.gcn0)));
  return relu(Mat(a_norm * (h1 * params.gcn1)));
}

Vec pool_graph(const Mat& node_embeddings, const std::vector<bool>& occupied) {
  Vec out = Vec::Zero(node_embeddings.cols());
  for (Eigen::Index r = 0; r < node_embeddings.rows(); ++r)
    if (occupied.at(r)) out += node_embeddings.row(r).transpose();
  return out;
}

Vec fuse(const Vec& h_q, const Vec& h_graph, const EncoderParams& params) {
  if (h_q.size() + h_graph.size() != params.fuse1.in_dim())
    throw ConfigError("fusion input width mismatch");
  Vec joint(h_q.size() + h_graph.size());
  joint << h_q, h_graph;
  return params.fuse2.apply(relu(params.fuse1.apply(joint)));
}

PosteriorGaussian posterior(const Vec& h_task, const EncoderParams& params,
                            double logvar_clamp) {
  PosteriorGaussian post;
  post.mu = params.mu_head.apply(h_task);
  post.logvar = params.logvar_head.apply(h_task)
                    .cwiseMax(-logvar_clamp)
                    .cwiseMin(logvar_clamp);
  return post;
}

Vec sample_z(const PosteriorGaussian& post, const Vec& eps) {
  return post.mu + post.sigma().cwiseProduct(eps);
}

}  // namespace topoprior
