#include "topoprior/prior.hpp"

#include <cmath>

namespace topoprior {

PriorParams::PriorParams(const ModelConfig& c)
    : layer1(c.embed_dim, c.prior_hidden_dim),
      layer2(c.prior_hidden_dim, c.latent_dim) {}

void PriorParams::initialize(Rng& rng) {
  init_fan_in(layer1.weight, layer1.in_dim(), rng);
  init_fan_in(layer2.weight, layer2.in_dim(), rng);
}

Vec prior_mean(const Vec& h_q, const PriorParams& params) {
  return params.layer2.apply(relu(params.layer1.apply(h_q)));
}

Vec sample_prior(const Vec& h_q, const Vec& eps, const PriorParams& params) {
  return prior_mean(h_q, params) + eps;
}

double kl_to_prior(const PosteriorGaussian& post, const Vec& m) {
  double kl = 0.0;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const double lv = post.logvar[j];
    const double diff = post.mu[j] - m[j];
    kl += std::exp(lv) + diff * diff - 1.0 - lv;
  }
  return 0.5 * kl;
}

}  // namespace topoprior
