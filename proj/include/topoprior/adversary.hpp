#pragma once

#include "topoprior/model_config.hpp"
#include "topoprior/nn.hpp"

namespace topoprior {

/// Latent domain discriminator: softmax(out(relu(hidden(z)))).
struct AdversaryParams {
  Affine hidden;  // latent -> discriminator_hidden
  Affine out;     // discriminator_hidden -> num_domains

  AdversaryParams() = default;
  explicit AdversaryParams(const ModelConfig& config);
  void initialize(Rng& rng);

  int num_domains() const { return out.out_dim(); }

  template <class F>
  void visit(F&& f) {
    hidden.visit("adversary.hidden", f);
    out.visit("adversary.out", f);
  }
};

Vec discriminate(const Vec& z, const AdversaryParams& params);

/// Cross-entropy of the discriminator against a one-hot domain label.
/// Throws ValidationError if `domain_onehot` is not one-hot of length K.
double adapt_loss(const Vec& z, const Vec& domain_onehot,
                  const AdversaryParams& params);

Vec domain_onehot(int domain_id, int num_domains);

/// Identity forward; backward scales the incoming gradient by `coefficient`.
/// The discriminator side of the loss never passes through it.
struct GradientReversal {
  double coefficient = -0.1;

  const Vec& forward(const Vec& z) const { return z; }
  Vec backward(const Vec& upstream) const { return coefficient * upstream; }
};

}  // namespace topoprior
