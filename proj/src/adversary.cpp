#include "topoprior/adversary.hpp"

#include <cmath>
#include <vector>

#include "topoprior/error.hpp"

namespace topoprior {

AdversaryParams::AdversaryParams(const ModelConfig& c)
    : hidden(c.latent_dim, c.discriminator_hidden_dim),
      out(c.discriminator_hidden_dim, c.num_domains) {}

void AdversaryParams::initialize(Rng& rng) {
  init_fan_in(hidden.weight, hidden.in_dim(), rng);
  init_fan_in(out.weight, out.in_dim(), rng);
}

Vec discriminate(const Vec& z, const AdversaryParams& params) {
  const Vec logits = params.out.apply(relu(params.hidden.apply(z)));
  return masked_softmax(logits, std::vector<bool>(logits.size(), true));
}

double adapt_loss(const Vec& z, const Vec& onehot, const AdversaryParams& params) {
  const int k = params.num_domains();
  if (onehot.size() != k)
    throw ValidationError("domain target has length " +
                          std::to_string(onehot.size()) + ", expected " +
                          std::to_string(k));
  int ones = 0;
  int label = -1;
  for (int i = 0; i < k; ++i) {
    if (onehot[i] == 1.0) {
      ++ones;
      label = i;
    } else if (onehot[i] != 0.0) {
      ones = -1;
      break;
    }
  }
  if (ones != 1) throw ValidationError("domain target is not one-hot");
  const Vec logits = params.out.apply(relu(params.hidden.apply(z)));
  const double top = logits.maxCoeff();
  const double log_norm =
      top + std::log((logits.array() - top).exp().sum());
  return log_norm - logits[label];
}

Vec domain_onehot(int domain_id, int num_domains) {
  if (domain_id < 0 || domain_id >= num_domains)
    throw ValidationError("domain id out of range");
  Vec v = Vec::Zero(num_domains);
  v[domain_id] = 1.0;
  return v;
}

}  // namespace topoprior
