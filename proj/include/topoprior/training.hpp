#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoprior/decoder.hpp"
#include "topoprior/model.hpp"

namespace topoprior {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 32;
  int epochs = 5;
  double alpha = 0.5;
  double beta = 0.5;
  double delta_e = 0.5;
  double grl_coefficient = -0.1;
  std::uint64_t seed = 0;
  int latent_dim = 128;
  int hidden_dim = 256;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Records per forward pass when evaluating the whole corpus.
  int eval_batch_size = 64;

  void validate() const;
  LossWeights loss_weights() const { return {alpha, beta, grl_coefficient}; }
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Mean loss components over the corpus. `task` averages only records that
/// carry a teacher utility and is 0 when none do.
struct EpochLoss {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double task = 0.0;
  double adapt = 0.0;
  double total = 0.0;
};

void write_loss_log_csv(std::ostream& out, const std::vector<EpochLoss>& log);
void write_loss_log_csv_file(const std::string& path,
                             const std::vector<EpochLoss>& log);

struct AdamState {
  TopoPriorModel m;
  TopoPriorModel v;
  std::int64_t step = 0;
};

/// Position of a run inside its epoch schedule.
struct TrainCursor {
  int epoch = 0;                  // 0-based epoch in progress
  std::size_t position = 0;       // records of `order` already consumed
  std::vector<std::size_t> order; // this epoch's permutation, empty before it starts
  std::string rng_state;
};

/// Mini-batch Adam over frozen encoded records.
///
/// Every epoch draws a permutation from the run stream, then each step draws
/// one eps row per record from the same stream. The log holds a full-corpus
/// evaluation before training (epoch 0) and after every epoch, each with the
/// same fixed eps stream, so entries are comparable.
class Trainer {
 public:
  Trainer(TopoPriorModel model, Mat role_embeddings,
          std::vector<EncodedRecord> records, TrainConfig config);

  /// Optimizer step on the next batch; returns the batch-mean total. Starts a
  /// new epoch (and logs the finished one) when needed.
  double step();
  bool finished() const;
  /// Steps until finished(), logging every epoch.
  void run();

  EpochLoss evaluate(int epoch) const;

  const TopoPriorModel& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<EpochLoss>& log() const { return log_; }
  const AdamState& adam() const { return adam_; }
  TrainCursor cursor() const;
  const Mat& role_embeddings() const { return role_embeddings_; }
  const std::vector<EncodedRecord>& records() const { return records_; }

  /// Replaces optimizer, cursor and log, e.g. from a checkpoint.
  void restore(AdamState adam, const TrainCursor& cursor,
               std::vector<EpochLoss> log);

 private:
  void begin_epoch();
  void finish_epoch();

  TopoPriorModel model_;
  Mat role_embeddings_;
  std::vector<EncodedRecord> records_;
  TrainConfig config_;
  AdamState adam_;
  TopoPriorModel grad_;
  Rng rng_;
  int epoch_ = 0;
  std::size_t position_ = 0;
  std::vector<std::size_t> order_;
  std::vector<EpochLoss> log_;
};

struct FitResult {
  TopoPriorModel model;
  std::vector<EpochLoss> log;
};

/// Builds a model with `model_config`, seeds it from config.seed and trains.
FitResult fit(const std::vector<EncodedRecord>& corpus, const Mat& role_embeddings,
              const ModelConfig& model_config, const TrainConfig& config);

/// Encodes every record (validating it) for training.
std::vector<EncodedRecord> encode_corpus(const std::vector<DatasetRecord>& records,
                                         const EmbeddingProvider& embedder,
                                         const ModelConfig& config);

/// Generation from the conditional prior: z = prior_mean(h_q) + eps. With
/// `use_prior` false, z = eps (a standard-normal prior, for ablation).
Generation infer_graph(const Vec& h_q, const TopoPriorModel& model,
                       const Mat& role_embeddings, double delta_e, const Vec& eps,
                       GenerationMode mode = GenerationMode::kGreedy,
                       Rng* rng = nullptr, bool use_prior = true);

/// Row-wise batch version of infer_graph.
std::vector<Generation> infer_graphs(const Mat& h_q, const TopoPriorModel& model,
                                     const Mat& role_embeddings, double delta_e,
                                     const Mat& eps,
                                     GenerationMode mode = GenerationMode::kGreedy,
                                     std::vector<Rng>* rngs = nullptr,
                                     bool use_prior = true);

struct BlockGradError {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  int coordinates = 0;
  /// Sampled coordinates dropped because the loss is not smooth around them.
  int skipped_kinks = 0;
};

struct GradcheckReport {
  std::vector<BlockGradError> blocks;
  double max_relative_error() const;
};

struct GradcheckOptions {
  /// Central-difference step.
  double step = 1e-5;
  int coordinates_per_block = 12;
  /// Denominator floor so that two gradients that are both ~0 compare equal.
  /// Sits above the ~1e-9 rounding noise of a difference quotient at step 1e-5.
  double denominator_floor = 1e-5;
  /// Relative disagreement between steps h and 2h that marks a kink.
  double kink_tolerance = 1e-3;
  /// Bounds the resampling so a block of kinks still terminates.
  int max_kinks_per_block = 8;
  std::uint64_t seed = 0;
};

/// Compares analytic gradients of the batch-mean total loss against central
/// differences on sampled coordinates of every parameter block. The GRL
/// coefficient is forced to +1 so the analytic gradient is the true one.
GradcheckReport gradcheck(const TopoPriorModel& model, const Mat& role_embeddings,
                          std::span<const EncodedRecord* const> batch,
                          const Mat& eps, LossWeights weights,
                          const GradcheckOptions& options = {});

/// Encoder gradient contributed by the adaptation loss alone, already
/// multiplied by weights.grl_coefficient.
EncoderParams adapt_encoder_gradient(const TopoPriorModel& model,
                                     const Mat& role_embeddings,
                                     std::span<const EncodedRecord* const> batch,
                                     const Mat& eps, const LossWeights& weights);

}  // namespace topoprior
