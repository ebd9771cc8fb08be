#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoprior/graphs.hpp"

namespace topoprior {

using EmbeddingVector = Eigen::VectorXd;

/// Source of frozen query and role features. Implementations are immutable
/// after construction and safe to call from several threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  virtual EmbeddingVector embed_query(const Query& query) const = 0;
  virtual EmbeddingVector embed_role(const RoleDescriptor& role) const = 0;

  /// Rows are role embeddings in pool order.
  Eigen::MatrixXd embed_pool(const RolePool& pool) const;
};

struct SyntheticEmbedderConfig {
  int dimension = 64;
  std::uint64_t seed = 7;
  /// Signed buckets each token is hashed into.
  int probes = 4;
  /// Norm of the domain signature relative to the unit token component.
  double signature_weight = 1.0;
};

/// Seeded feature hashing of whitespace-separated tokens, plus a domain
/// signature for every `domain:<k>` token, then L2 normalization.
///
/// Signatures for domains 0, 1, ... are Gram-Schmidt orthogonalized in order,
/// so distinct domains start from orthogonal directions while queries that
/// share tokens still overlap.
class SyntheticEmbedder final : public EmbeddingProvider {
 public:
  explicit SyntheticEmbedder(SyntheticEmbedderConfig config = {});

  std::string name() const override { return "synthetic"; }
  int dimension() const override { return config_.dimension; }
  const SyntheticEmbedderConfig& config() const { return config_; }

  EmbeddingVector embed_query(const Query& query) const override;
  EmbeddingVector embed_role(const RoleDescriptor& role) const override;

  /// Unit signature direction of a domain.
  EmbeddingVector domain_signature(int domain_id) const;

 private:
  EmbeddingVector embed_text(const std::string& text) const;
  EmbeddingVector hash_token(const std::string& token) const;

  SyntheticEmbedderConfig config_;
  mutable std::mutex signature_mutex_;
  mutable std::vector<EmbeddingVector> signatures_;
};

struct HttpEmbeddingConfig {
  /// e.g. "http://localhost:8080/embed". Overridden by TOPOPRIOR_EMBEDDING_URL.
  std::string endpoint;
  int dimension = 0;
  int timeout_seconds = 10;
};

/// Client for an external embedding service speaking
/// `{"texts": [...]}` -> `{"vectors": [[...], ...]}` over HTTP POST.
class HttpEmbeddingClient final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingClient(HttpEmbeddingConfig config);

  std::string name() const override { return "http"; }
  int dimension() const override { return config_.dimension; }
  const std::string& endpoint() const { return config_.endpoint; }

  EmbeddingVector embed_query(const Query& query) const override;
  EmbeddingVector embed_role(const RoleDescriptor& role) const override;

  /// One round trip for many texts. Throws TransportError on connection or
  /// protocol failure.
  std::vector<EmbeddingVector> embed_texts(
      const std::vector<std::string>& texts) const;

 private:
  HttpEmbeddingConfig config_;
  mutable std::mutex mutex_;
};

std::string role_text(const RoleDescriptor& role);

}  // namespace topoprior
