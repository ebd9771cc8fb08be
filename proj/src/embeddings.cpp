#include "topoprior/embeddings.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "topoprior/error.hpp"
#include "topoprior/rng.hpp"

namespace topoprior {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  return tokens;
}

bool parse_domain_token(const std::string& token, int& domain) {
  static const std::string prefix = "domain:";
  if (token.rfind(prefix, 0) != 0) return false;
  try {
    std::size_t used = 0;
    domain = std::stoi(token.substr(prefix.size()), &used);
    return used == token.size() - prefix.size() && domain >= 0;
  } catch (const std::exception&) {
    return false;
  }
}

EmbeddingVector normalized(EmbeddingVector v) {
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

void require_finite(const EmbeddingVector& v, const char* what) {
  if (!v.allFinite()) throw ValidationError(std::string(what) + " is not finite");
}

}  // namespace

Eigen::MatrixXd EmbeddingProvider::embed_pool(const RolePool& pool) const {
  Eigen::MatrixXd out(pool.size(), dimension());
  for (int r = 0; r < pool.size(); ++r)
    out.row(r) = embed_role(pool[r]).transpose();
  return out;
}

std::string role_text(const RoleDescriptor& role) {
  std::string name = role.name;
  for (char& c : name)
    if (c == ' ') c = '_';
  return "role:" + name + " " + role.description;
}

SyntheticEmbedder::SyntheticEmbedder(SyntheticEmbedderConfig config)
    : config_(config) {
  if (config_.dimension < 1) throw ConfigError("embedding dimension must be >= 1");
  if (config_.probes < 1) throw ConfigError("probes must be >= 1");
  if (config_.signature_weight < 0.0)
    throw ConfigError("signature_weight must be >= 0");
}

EmbeddingVector SyntheticEmbedder::hash_token(const std::string& token) const {
  EmbeddingVector v = EmbeddingVector::Zero(config_.dimension);
  const std::uint64_t base = derive_seed(config_.seed, fnv1a(token));
  for (int p = 0; p < config_.probes; ++p) {
    const std::uint64_t h = mix_seed(base + static_cast<std::uint64_t>(p));
    const auto bucket = static_cast<Eigen::Index>(h % config_.dimension);
    v[bucket] += ((h >> 63) != 0U) ? -1.0 : 1.0;
  }
  return v;
}

EmbeddingVector SyntheticEmbedder::domain_signature(int domain_id) const {
  if (domain_id < 0) throw ValidationError("negative domain id");
  std::lock_guard<std::mutex> lock(signature_mutex_);
  while (static_cast<int>(signatures_.size()) <= domain_id) {
    const auto d = static_cast<std::uint64_t>(signatures_.size());
    Rng rng(derive_seed(config_.seed, 0x5167a7u, d));
    EmbeddingVector v = standard_normal(rng, config_.dimension);
    if (static_cast<int>(signatures_.size()) < config_.dimension) {
      for (const auto& prev : signatures_) v -= prev.dot(v) * prev;
    }
    signatures_.push_back(normalized(std::move(v)));
  }
  return signatures_[domain_id];
}

EmbeddingVector SyntheticEmbedder::embed_text(const std::string& text) const {
  auto tokens = tokenize(text);
  EmbeddingVector tokens_part = EmbeddingVector::Zero(config_.dimension);
  EmbeddingVector signature_part = EmbeddingVector::Zero(config_.dimension);
  for (const auto& token : tokens) {
    int domain = 0;
    if (parse_domain_token(token, domain))
      signature_part += domain_signature(domain);
    else
      tokens_part += hash_token(token);
  }
  const double token_norm = tokens_part.norm();
  if (token_norm > 0.0) tokens_part /= token_norm;
  EmbeddingVector v = tokens_part + config_.signature_weight * signature_part;
  if (v.norm() == 0.0) v = hash_token(text);
  return normalized(std::move(v));
}

EmbeddingVector SyntheticEmbedder::embed_query(const Query& query) const {
  if (const auto* text = std::get_if<std::string>(&query))
    return embed_text(*text);
  const auto& features = std::get<std::vector<double>>(query);
  if (static_cast<int>(features.size()) != config_.dimension)
    throw ValidationError("feature vector has dimension " +
                          std::to_string(features.size()) + ", expected " +
                          std::to_string(config_.dimension));
  EmbeddingVector v =
      Eigen::Map<const EmbeddingVector>(features.data(), config_.dimension);
  require_finite(v, "query feature vector");
  if (v.norm() == 0.0) throw ValidationError("query feature vector is zero");
  return normalized(std::move(v));
}

EmbeddingVector SyntheticEmbedder::embed_role(const RoleDescriptor& role) const {
  return embed_text(role_text(role));
}

// ---------------------------------------------------------------------------

HttpEmbeddingClient::HttpEmbeddingClient(HttpEmbeddingConfig config)
    : config_(std::move(config)) {
  if (const char* env = std::getenv("TOPOPRIOR_EMBEDDING_URL");
      env != nullptr && *env != '\0')
    config_.endpoint = env;
  if (config_.endpoint.empty()) throw ConfigError("embedding endpoint is empty");
  if (config_.dimension < 1)
    throw ConfigError("embedding service must declare a dimension");
}

std::vector<EmbeddingVector> HttpEmbeddingClient::embed_texts(
    const std::vector<std::string>& texts) const {
  const auto scheme_end = config_.endpoint.find("://");
  const auto path_start = config_.endpoint.find(
      '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string host = config_.endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos
                               ? "/"
                               : config_.endpoint.substr(path_start);

  const nlohmann::json request = {{"texts", texts}};
  httplib::Result result;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    httplib::Client client(host);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    result = client.Post(path, request.dump(), "application/json");
  }
  if (!result)
    throw TransportError("embedding request to " + config_.endpoint + " failed",
                         httplib::to_string(result.error()));
  if (result->status != 200)
    throw TransportError("embedding service returned an error",
                         "HTTP " + std::to_string(result->status));

  nlohmann::json body;
  try {
    body = nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::parse_error& ex) {
    throw TransportError("embedding service sent malformed JSON", ex.what());
  }
  if (!body.contains("vectors") || !body["vectors"].is_array() ||
      body["vectors"].size() != texts.size())
    throw TransportError("embedding service response",
                         "expected one vector per text under \"vectors\"");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& row : body["vectors"]) {
    const auto values = row.get<std::vector<double>>();
    if (static_cast<int>(values.size()) != config_.dimension)
      throw TransportError("embedding service response",
                           "vector of dimension " + std::to_string(values.size()) +
                               ", expected " + std::to_string(config_.dimension));
    EmbeddingVector v =
        Eigen::Map<const EmbeddingVector>(values.data(), config_.dimension);
    require_finite(v, "service vector");
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingVector HttpEmbeddingClient::embed_query(const Query& query) const {
  if (const auto* text = std::get_if<std::string>(&query))
    return embed_texts({*text}).front();
  const auto& features = std::get<std::vector<double>>(query);
  if (static_cast<int>(features.size()) != config_.dimension)
    throw ValidationError("feature vector dimension mismatch");
  return Eigen::Map<const EmbeddingVector>(features.data(), config_.dimension);
}

EmbeddingVector HttpEmbeddingClient::embed_role(const RoleDescriptor& role) const {
  return embed_texts({role_text(role)}).front();
}

}  // namespace topoprior
