#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "topoprior/adversary.hpp"
#include "topoprior/decoder.hpp"
#include "topoprior/embeddings.hpp"
#include "topoprior/encoder.hpp"
#include "topoprior/graphs.hpp"
#include "topoprior/model_config.hpp"
#include "topoprior/nn.hpp"
#include "topoprior/prior.hpp"

namespace topoprior {

/// Affine regressor from z to the teacher utility of the reference graph.
struct UtilityHead {
  Affine head;  // latent -> 1

  UtilityHead() = default;
  explicit UtilityHead(const ModelConfig& c) : head(c.latent_dim, 1) {}

  template <class F>
  void visit(F&& f) {
    head.visit("utility.head", f);
  }
};

/// Every trainable block. A second instance of the same type doubles as the
/// gradient or optimizer-moment buffer.
struct TopoPriorModel {
  ModelConfig config;
  EncoderParams encoder;
  PriorParams prior;
  DecoderParams decoder;
  AdversaryParams adversary;
  UtilityHead utility;

  static TopoPriorModel zeros(const ModelConfig& config);
  static TopoPriorModel initialized(const ModelConfig& config, std::uint64_t seed);

  template <class F>
  void visit(F&& f) {
    encoder.visit(f);
    prior.visit(f);
    decoder.visit(f);
    adversary.visit(f);
    utility.visit(f);
  }

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;
  void set_zero();
};

/// Frozen inputs for one record, computed once before training.
struct EncodedRecord {
  Vec h_q;
  CollaborationGraph graph;  // canonical order
  Mat a_norm;                // pool x pool
  std::vector<bool> occupied;
  int domain_id = 0;
  std::optional<double> teacher_utility;
};

EncodedRecord encode_record(const DatasetRecord& record,
                            const EmbeddingProvider& embedder,
                            const ModelConfig& config);

struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;
  /// Applied to the adaptation gradient on the encoder side only.
  double grl_coefficient = -0.1;
};

struct LossComponents {
  double recon = 0.0;
  double kl = 0.0;
  std::optional<double> task;  // absent without a teacher utility
  double adapt = 0.0;
  double total = 0.0;
};

struct BatchLoss {
  std::vector<LossComponents> per_record;
  double mean_total = 0.0;
};

/// Forward pass of the combined objective
///   total = recon + kl + alpha * task + beta * adapt
/// for each record, with `eps` holding one standard-normal row per record.
///
/// With `grad` non-null, accumulates gradients of the batch-mean total. The
/// encoder receives the adaptation gradient multiplied by grl_coefficient;
/// the discriminator receives it unchanged. `adapt_encoder_grad`, when
/// given, is overwritten with just that scaled encoder contribution.
BatchLoss forward_backward(const TopoPriorModel& model, const Mat& role_embeddings,
                           std::span<const EncodedRecord* const> batch,
                           const Mat& eps, const LossWeights& weights,
                           TopoPriorModel* grad,
                           EncoderParams* adapt_encoder_grad = nullptr);

/// Single-record convenience wrapper around forward_backward.
LossComponents total_loss(const TopoPriorModel& model, const Mat& role_embeddings,
                          const EncodedRecord& record, const Vec& eps,
                          const LossWeights& weights);

/// Posterior for one record (used for latent analysis).
PosteriorGaussian encode_posterior(const TopoPriorModel& model,
                                   const Mat& role_embeddings,
                                   const EncodedRecord& record);

}  // namespace topoprior
