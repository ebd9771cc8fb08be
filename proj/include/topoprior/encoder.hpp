#pragma once

#include <string>
#include <vector>

#include "topoprior/model_config.hpp"
#include "topoprior/nn.hpp"

namespace topoprior {

/// Variational graph encoder q(z | graph, query): two GCN layers over the
/// normalized role-slot adjacency, sum pooling, a two-layer fusion MLP over
/// (h_q || h_G) and affine Gaussian heads.
struct EncoderParams {
  Mat gcn0;  // embed_dim x hidden, applied as A h W
  Mat gcn1;  // hidden x hidden
  Affine fuse1;
  Affine fuse2;
  Affine mu_head;
  Affine logvar_head;

  EncoderParams() = default;
  explicit EncoderParams(const ModelConfig& config);
  void initialize(Rng& rng);

  template <class F>
  void visit(F&& f) {
    f("encoder.gcn0", gcn0);
    f("encoder.gcn1", gcn1);
    fuse1.visit("encoder.fuse1", f);
    fuse2.visit("encoder.fuse2", f);
    mu_head.visit("encoder.mu_head", f);
    logvar_head.visit("encoder.logvar_head", f);
  }
};

struct PosteriorGaussian {
  Vec mu;
  Vec logvar;  // already clamped
  Vec sigma() const { return (0.5 * logvar.array()).exp().matrix(); }
};

/// Rows of unoccupied slots are zero.
Mat initial_node_features(const std::vector<bool>& occupied,
                          const Mat& role_embeddings);

/// relu(A relu(A H0 W0) W1) for one graph.
Mat gcn_forward(const Mat& a_norm, const Mat& h0, const EncoderParams& params);

Vec pool_graph(const Mat& node_embeddings, const std::vector<bool>& occupied);

/// fuse2(relu(fuse1(h_q || h_G))).
Vec fuse(const Vec& h_q, const Vec& h_graph, const EncoderParams& params);

/// Affine heads; logvar is clamped to [-clamp, clamp].
PosteriorGaussian posterior(const Vec& h_task, const EncoderParams& params,
                            double logvar_clamp = 10.0);

/// z = mu + exp(logvar / 2) * eps.
Vec sample_z(const PosteriorGaussian& post, const Vec& eps);

}  // namespace topoprior
