#include "topoprior/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "topoprior/error.hpp"

namespace topoprior {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw ConfigError("alpha and beta must be non-negative");
  if (!(delta_e >= 0.0 && delta_e <= 1.0))
    throw ConfigError("delta_e must lie in [0, 1]");
  if (latent_dim < 1 || hidden_dim < 1)
    throw ConfigError("latent_dim and hidden_dim must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0))
    throw ConfigError("invalid Adam constants");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"delta_e", c.delta_e},
       {"grl_coefficient", c.grl_coefficient},
       {"seed", c.seed},
       {"latent_dim", c.latent_dim},
       {"hidden_dim", c.hidden_dim},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_epsilon", c.adam_epsilon},
       {"eval_batch_size", c.eval_batch_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.alpha = j.value("alpha", d.alpha);
  c.beta = j.value("beta", d.beta);
  c.delta_e = j.value("delta_e", d.delta_e);
  c.grl_coefficient = j.value("grl_coefficient", d.grl_coefficient);
  c.seed = j.value("seed", d.seed);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
  c.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
}

void write_loss_log_csv(std::ostream& out, const std::vector<EpochLoss>& log) {
  out << "epoch,recon,kl,task,adapt,total\n";
  out.precision(17);
  for (const auto& e : log)
    out << e.epoch << ',' << e.recon << ',' << e.kl << ',' << e.task << ','
        << e.adapt << ',' << e.total << '\n';
}

void write_loss_log_csv_file(const std::string& path,
                             const std::vector<EpochLoss>& log) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  write_loss_log_csv(out, log);
}

namespace {

void adam_update(TopoPriorModel& model, const TopoPriorModel& grad, AdamState& adam,
                 const TrainConfig& c) {
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double correction1 = 1.0 - std::pow(c.adam_beta1, t);
  const double correction2 = 1.0 - std::pow(c.adam_beta2, t);
  auto params = model.parameters();
  auto grads = const_cast<TopoPriorModel&>(grad).parameters();
  auto ms = adam.m.parameters();
  auto vs = adam.v.parameters();
  for (std::size_t b = 0; b < params.size(); ++b) {
    double* p = params[b].data;
    const double* g = grads[b].data;
    double* m = ms[b].data;
    double* v = vs[b].data;
    for (Eigen::Index i = 0; i < params[b].size(); ++i) {
      m[i] = c.adam_beta1 * m[i] + (1.0 - c.adam_beta1) * g[i];
      v[i] = c.adam_beta2 * v[i] + (1.0 - c.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.adam_epsilon);
    }
  }
}

bool all_finite(TopoPriorModel& grad) {
  for (const auto& p : grad.parameters())
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (!std::isfinite(p.data[i])) return false;
  return true;
}

}  // namespace

Trainer::Trainer(TopoPriorModel model, Mat role_embeddings,
                 std::vector<EncodedRecord> records, TrainConfig config)
    : model_(std::move(model)),
      role_embeddings_(std::move(role_embeddings)),
      records_(std::move(records)),
      config_(config),
      rng_(derive_seed(config.seed, 0x7a11)) {
  config_.validate();
  if (records_.empty()) throw ValidationError("training corpus is empty");
  if (config_.latent_dim != model_.config.latent_dim ||
      config_.hidden_dim != model_.config.hidden_dim)
    throw ConfigError("train config widths disagree with the model config");
  if (role_embeddings_.rows() != model_.config.pool_size ||
      role_embeddings_.cols() != model_.config.embed_dim)
    throw ConfigError("role embeddings must be pool_size x embed_dim");
  const auto missing = std::count_if(records_.begin(), records_.end(), [](const auto& r) {
    return !r.teacher_utility.has_value();
  });
  if (config_.alpha > 0.0 && missing > 0)
    std::cerr << "warning: " << missing
              << " records have no teacher utility; their task term is skipped\n";
  adam_.m = TopoPriorModel::zeros(model_.config);
  adam_.v = TopoPriorModel::zeros(model_.config);
  grad_ = TopoPriorModel::zeros(model_.config);
  log_.push_back(evaluate(0));
}

bool Trainer::finished() const { return epoch_ >= config_.epochs; }

void Trainer::begin_epoch() {
  order_.resize(records_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  position_ = 0;
}

void Trainer::finish_epoch() {
  ++epoch_;
  log_.push_back(evaluate(epoch_));
  order_.clear();
  position_ = 0;
}

double Trainer::step() {
  if (finished()) throw ValidationError("training already finished");
  if (order_.empty()) begin_epoch();
  const std::size_t count = std::min<std::size_t>(config_.batch_size,
                                                  order_.size() - position_);
  std::vector<const EncodedRecord*> batch(count);
  for (std::size_t i = 0; i < count; ++i) batch[i] = &records_[order_[position_ + i]];
  const Mat eps = standard_normal(rng_, static_cast<Eigen::Index>(count),
                                  model_.config.latent_dim);
  grad_.set_zero();
  BatchLoss loss;
  const auto describe = [&] {
    std::ostringstream msg;
    msg << "epoch " << epoch_ + 1 << ", batch at position " << position_
        << " (records";
    for (std::size_t i = 0; i < count; ++i) msg << ' ' << order_[position_ + i];
    msg << ')';
    return msg.str();
  };
  try {
    loss = forward_backward(model_, role_embeddings_, batch, eps,
                            config_.loss_weights(), &grad_);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " in " + describe());
  }
  if (!all_finite(grad_)) throw NumericalError("non-finite gradient in " + describe());
  adam_update(model_, grad_, adam_, config_);
  position_ += count;
  if (position_ == order_.size()) finish_epoch();
  return loss.mean_total;
}

void Trainer::run() {
  while (!finished()) step();
}

EpochLoss Trainer::evaluate(int epoch) const {
  Rng eval_rng(derive_seed(config_.seed, 0xe7a1));
  EpochLoss out;
  out.epoch = epoch;
  std::size_t with_task = 0;
  const std::size_t chunk = static_cast<std::size_t>(config_.eval_batch_size);
  std::vector<const EncodedRecord*> batch;
  for (std::size_t start = 0; start < records_.size(); start += chunk) {
    const std::size_t count = std::min(chunk, records_.size() - start);
    batch.resize(count);
    for (std::size_t i = 0; i < count; ++i) batch[i] = &records_[start + i];
    const Mat eps = standard_normal(eval_rng, static_cast<Eigen::Index>(count),
                                    model_.config.latent_dim);
    const BatchLoss loss = forward_backward(model_, role_embeddings_, batch, eps,
                                            config_.loss_weights(), nullptr);
    for (const auto& c : loss.per_record) {
      out.recon += c.recon;
      out.kl += c.kl;
      out.adapt += c.adapt;
      out.total += c.total;
      if (c.task) {
        out.task += *c.task;
        ++with_task;
      }
    }
  }
  const double n = static_cast<double>(records_.size());
  out.recon /= n;
  out.kl /= n;
  out.adapt /= n;
  out.total /= n;
  if (with_task > 0) out.task /= static_cast<double>(with_task);
  return out;
}

TrainCursor Trainer::cursor() const {
  return {epoch_, position_, order_, rng_state(rng_)};
}

void Trainer::restore(AdamState adam, const TrainCursor& cursor,
                      std::vector<EpochLoss> log) {
  if (cursor.position > cursor.order.size() ||
      (!cursor.order.empty() && cursor.order.size() != records_.size()))
    throw CheckpointError("training cursor does not fit this corpus");
  adam_ = std::move(adam);
  epoch_ = cursor.epoch;
  position_ = cursor.position;
  order_ = cursor.order;
  restore_rng_state(rng_, cursor.rng_state);
  log_ = std::move(log);
}

FitResult fit(const std::vector<EncodedRecord>& corpus, const Mat& role_embeddings,
              const ModelConfig& model_config, const TrainConfig& config) {
  ModelConfig mc = model_config;
  mc.latent_dim = config.latent_dim;
  mc.hidden_dim = config.hidden_dim;
  Trainer trainer(TopoPriorModel::initialized(mc, config.seed), role_embeddings,
                  corpus, config);
  trainer.run();
  return {trainer.model(), trainer.log()};
}

std::vector<EncodedRecord> encode_corpus(const std::vector<DatasetRecord>& records,
                                         const EmbeddingProvider& embedder,
                                         const ModelConfig& config) {
  std::vector<EncodedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_record(r, embedder, config));
  return out;
}

std::vector<Generation> infer_graphs(const Mat& h_q, const TopoPriorModel& model,
                                     const Mat& role_embeddings, double delta_e,
                                     const Mat& eps, GenerationMode mode,
                                     std::vector<Rng>* rngs, bool use_prior) {
  if (eps.rows() != h_q.rows() || eps.cols() != model.config.latent_dim)
    throw ConfigError("eps must have one latent-sized row per query");
  Mat z = eps;
  if (use_prior)
    z += model.prior.layer2.forward(relu(model.prior.layer1.forward(h_q)));
  return generate_batch(z, h_q, delta_e, mode, rngs, role_embeddings,
                        model.decoder);
}

Generation infer_graph(const Vec& h_q, const TopoPriorModel& model,
                       const Mat& role_embeddings, double delta_e, const Vec& eps,
                       GenerationMode mode, Rng* rng, bool use_prior) {
  Vec z = eps;
  if (use_prior) z += prior_mean(h_q, model.prior);
  return generate(z, h_q, delta_e, mode, rng, role_embeddings, model.decoder);
}

double GradcheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& b : blocks) worst = std::max(worst, b.max_relative_error);
  return worst;
}

GradcheckReport gradcheck(const TopoPriorModel& model, const Mat& role_embeddings,
                          std::span<const EncodedRecord* const> batch,
                          const Mat& eps, LossWeights weights,
                          const GradcheckOptions& options) {
  weights.grl_coefficient = 1.0;
  TopoPriorModel probe = model;
  TopoPriorModel grad = TopoPriorModel::zeros(model.config);
  forward_backward(probe, role_embeddings, batch, eps, weights, &grad);
  const auto loss_at = [&] {
    return forward_backward(probe, role_embeddings, batch, eps, weights, nullptr)
        .mean_total;
  };

  Rng rng(derive_seed(options.seed, 0x9c4e));
  auto params = probe.parameters();
  auto grads = grad.parameters();
  GradcheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    BlockGradError block;
    block.name = params[b].name;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(params[b].size()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    const auto rel = [&](double a, double n) {
      return std::abs(a - n) /
             std::max({std::abs(a), std::abs(n), options.denominator_floor});
    };
    for (const Eigen::Index i : coords) {
      if (block.coordinates >= options.coordinates_per_block ||
          block.skipped_kinks >= options.max_kinks_per_block)
        break;
      double& x = params[b].data[i];
      const double original = x;
      const auto at = [&](double offset) {
        x = original + offset;
        return loss_at();
      };
      const double h = options.step;
      const double numeric = (at(h) - at(-h)) / (2.0 * h);
      // On a smooth loss the two steps agree to O(h^2); disagreement means a
      // ReLU or clamp boundary lies inside the stencil. The test never looks at
      // the analytic value, so it cannot hide a wrong gradient.
      const double wide = (at(2.0 * h) - at(-2.0 * h)) / (4.0 * h);
      x = original;
      if (rel(wide, numeric) > options.kink_tolerance) {
        ++block.skipped_kinks;
        continue;
      }
      const double analytic = grads[b].data[i];
      block.max_relative_error = std::max(block.max_relative_error, rel(analytic, numeric));
      block.max_abs_analytic = std::max(block.max_abs_analytic, std::abs(analytic));
      ++block.coordinates;
    }
    report.blocks.push_back(block);
  }
  return report;
}

EncoderParams adapt_encoder_gradient(const TopoPriorModel& model,
                                     const Mat& role_embeddings,
                                     std::span<const EncodedRecord* const> batch,
                                     const Mat& eps, const LossWeights& weights) {
  TopoPriorModel grad = TopoPriorModel::zeros(model.config);
  EncoderParams out;
  forward_backward(model, role_embeddings, batch, eps, weights, &grad, &out);
  return out;
}

}  // namespace topoprior
