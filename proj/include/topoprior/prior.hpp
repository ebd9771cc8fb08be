#pragma once

#include "topoprior/encoder.hpp"
#include "topoprior/model_config.hpp"
#include "topoprior/nn.hpp"

namespace topoprior {

/// Query-conditioned prior N(f_prior(h_q), I).
struct PriorParams {
  Affine layer1;  // embed_dim -> prior_hidden
  Affine layer2;  // prior_hidden -> latent

  PriorParams() = default;
  explicit PriorParams(const ModelConfig& config);
  void initialize(Rng& rng);

  template <class F>
  void visit(F&& f) {
    layer1.visit("prior.layer1", f);
    layer2.visit("prior.layer2", f);
  }
};

Vec prior_mean(const Vec& h_q, const PriorParams& params);

/// prior_mean(h_q) + eps; unit covariance.
Vec sample_prior(const Vec& h_q, const Vec& eps, const PriorParams& params);

/// KL(N(mu, diag exp(logvar)) || N(m, I)).
double kl_to_prior(const PosteriorGaussian& post, const Vec& m);

}  // namespace topoprior
