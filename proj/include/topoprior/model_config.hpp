#pragma once

#include <json.hpp>

namespace topoprior {

/// Layer widths of the topology prior.
///
/// `embed_dim` is the width of the frozen query/role features. The default
/// matches a BERT-base text encoder; desk-scale runs set it from the
/// embedding provider (64 for the synthetic embedder).
struct ModelConfig {
  int embed_dim = 768;
  int pool_size = 13;
  int num_domains = 4;
  int hidden_dim = 256;
  int latent_dim = 128;
  int edge_hidden_dim = 256;
  int prior_hidden_dim = 256;
  int discriminator_hidden_dim = 64;
  double logvar_clamp = 10.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace topoprior
