#include "topoprior/model.hpp"

#include <cmath>

#include "topoprior/error.hpp"

namespace topoprior {

void ModelConfig::validate() const {
  if (embed_dim < 1 || pool_size < 1 || num_domains < 1 || hidden_dim < 1 ||
      latent_dim < 1 || edge_hidden_dim < 1 || prior_hidden_dim < 1 ||
      discriminator_hidden_dim < 1)
    throw ConfigError("model dimensions must be positive");
  if (!(logvar_clamp > 0.0)) throw ConfigError("logvar_clamp must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"pool_size", c.pool_size},
       {"num_domains", c.num_domains},
       {"hidden_dim", c.hidden_dim},
       {"latent_dim", c.latent_dim},
       {"edge_hidden_dim", c.edge_hidden_dim},
       {"prior_hidden_dim", c.prior_hidden_dim},
       {"discriminator_hidden_dim", c.discriminator_hidden_dim},
       {"logvar_clamp", c.logvar_clamp}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.pool_size = j.value("pool_size", d.pool_size);
  c.num_domains = j.value("num_domains", d.num_domains);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.edge_hidden_dim = j.value("edge_hidden_dim", d.edge_hidden_dim);
  c.prior_hidden_dim = j.value("prior_hidden_dim", d.prior_hidden_dim);
  c.discriminator_hidden_dim =
      j.value("discriminator_hidden_dim", d.discriminator_hidden_dim);
  c.logvar_clamp = j.value("logvar_clamp", d.logvar_clamp);
}

TopoPriorModel TopoPriorModel::zeros(const ModelConfig& config) {
  config.validate();
  TopoPriorModel m;
  m.config = config;
  m.encoder = EncoderParams(config);
  m.prior = PriorParams(config);
  m.decoder = DecoderParams(config);
  m.adversary = AdversaryParams(config);
  m.utility = UtilityHead(config);
  return m;
}

TopoPriorModel TopoPriorModel::initialized(const ModelConfig& config,
                                           std::uint64_t seed) {
  TopoPriorModel m = zeros(config);
  Rng rng(derive_seed(seed, 0x1417));
  m.encoder.initialize(rng);
  m.prior.initialize(rng);
  m.decoder.initialize(rng);
  m.adversary.initialize(rng);
  init_fan_in(m.utility.head.weight, m.utility.head.in_dim(), rng);
  return m;
}

std::vector<ParamRef> TopoPriorModel::parameters() {
  std::vector<ParamRef> out;
  visit([&](const std::string& name, auto& t) {
    out.push_back({name, t.data(), t.rows(), t.cols()});
  });
  return out;
}

std::size_t TopoPriorModel::parameter_count() const {
  std::size_t count = 0;
  const_cast<TopoPriorModel*>(this)->visit(
      [&](const std::string&, auto& t) { count += t.size(); });
  return count;
}

void TopoPriorModel::set_zero() {
  visit([](const std::string&, auto& t) { t.setZero(); });
}

EncodedRecord encode_record(const DatasetRecord& record,
                            const EmbeddingProvider& embedder,
                            const ModelConfig& config) {
  validate_record(record, config.pool_size, config.num_domains);
  if (embedder.dimension() != config.embed_dim)
    throw ConfigError("embedding provider dimension " +
                      std::to_string(embedder.dimension()) +
                      " does not match model embed_dim " +
                      std::to_string(config.embed_dim));
  EncodedRecord out;
  out.h_q = embedder.embed_query(record.query);
  out.graph = canonicalize(record.graph);
  const auto adjacency = to_adjacency(out.graph, config.pool_size);
  out.a_norm = normalize_adjacency(adjacency);
  out.occupied = adjacency.occupied;
  out.domain_id = record.domain_id;
  out.teacher_utility = record.teacher_utility;
  return out;
}

namespace {

struct EncoderCache {
  Mat h0, pre1, h1, pre2, joint, fuse_pre, fuse_act, task, logvar_raw;
};

/// Batched encoder forward. Returns (mu, clamped logvar).
std::pair<Mat, Mat> encoder_forward(const EncoderParams& p, const ModelConfig& c,
                                    const Mat& role_embeddings,
                                    std::span<const EncodedRecord* const> batch,
                                    const Mat& h_q, EncoderCache& cache) {
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const int n = c.pool_size;
  cache.h0 = Mat::Zero(rows * n, c.embed_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    for (int r = 0; r < n; ++r)
      if (batch[b]->occupied[r]) cache.h0.row(b * n + r) = role_embeddings.row(r);

  Mat projected = cache.h0 * p.gcn0;
  cache.pre1.resize(rows * n, c.hidden_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    cache.pre1.middleRows(b * n, n).noalias() =
        batch[b]->a_norm * projected.middleRows(b * n, n);
  cache.h1 = relu(cache.pre1);
  projected.noalias() = cache.h1 * p.gcn1;
  cache.pre2.resize(rows * n, c.hidden_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    cache.pre2.middleRows(b * n, n).noalias() =
        batch[b]->a_norm * projected.middleRows(b * n, n);
  const Mat h2 = relu(cache.pre2);

  Mat pooled = Mat::Zero(rows, c.hidden_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    for (int r = 0; r < n; ++r)
      if (batch[b]->occupied[r]) pooled.row(b) += h2.row(b * n + r);

  cache.joint.resize(rows, c.embed_dim + c.hidden_dim);
  cache.joint << h_q, pooled;
  cache.fuse_pre = p.fuse1.forward(cache.joint);
  cache.fuse_act = relu(cache.fuse_pre);
  cache.task = p.fuse2.forward(cache.fuse_act);
  Mat mu = p.mu_head.forward(cache.task);
  cache.logvar_raw = p.logvar_head.forward(cache.task);
  Mat logvar =
      cache.logvar_raw.cwiseMax(-c.logvar_clamp).cwiseMin(c.logvar_clamp);
  return {std::move(mu), std::move(logvar)};
}

void encoder_backward(const EncoderParams& p, const ModelConfig& c,
                      std::span<const EncodedRecord* const> batch,
                      const EncoderCache& cache, const Mat& dmu,
                      const Mat& dlogvar, EncoderParams& g) {
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const int n = c.pool_size;
  const Mat dlogvar_raw =
      (cache.logvar_raw.array().abs() <= c.logvar_clamp).select(dlogvar, 0.0);
  Mat dtask = p.mu_head.backward(cache.task, dmu, g.mu_head);
  dtask.noalias() += p.logvar_head.backward(cache.task, dlogvar_raw, g.logvar_head);
  const Mat dfuse_act = p.fuse2.backward(cache.fuse_act, dtask, g.fuse2);
  const Mat djoint = p.fuse1.backward(
      cache.joint, relu_backward(cache.fuse_pre, dfuse_act), g.fuse1);
  const auto dpooled = djoint.rightCols(c.hidden_dim);

  Mat dh2 = Mat::Zero(rows * n, c.hidden_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    for (int r = 0; r < n; ++r)
      if (batch[b]->occupied[r]) dh2.row(b * n + r) = dpooled.row(b);
  const Mat dpre2 = relu_backward(cache.pre2, dh2);
  Mat dprojected(rows * n, c.hidden_dim);
  for (Eigen::Index b = 0; b < rows; ++b)
    dprojected.middleRows(b * n, n).noalias() =
        batch[b]->a_norm.transpose() * dpre2.middleRows(b * n, n);
  g.gcn1.noalias() += cache.h1.transpose() * dprojected;
  const Mat dpre1 = relu_backward(cache.pre1, Mat(dprojected * p.gcn1.transpose()));
  for (Eigen::Index b = 0; b < rows; ++b)
    dprojected.middleRows(b * n, n).noalias() =
        batch[b]->a_norm.transpose() * dpre1.middleRows(b * n, n);
  g.gcn0.noalias() += cache.h0.transpose() * dprojected;
}

void scale_encoder(EncoderParams& g, double factor) {
  g.visit([factor](const std::string&, auto& t) { t *= factor; });
}

void add_encoder(EncoderParams& into, EncoderParams& from) {
  std::vector<double*> dst;
  into.visit([&](const std::string&, auto& t) { dst.push_back(t.data()); });
  std::size_t i = 0;
  from.visit([&](const std::string&, auto& t) {
    double* d = dst[i++];
    for (Eigen::Index k = 0; k < t.size(); ++k) d[k] += t.data()[k];
  });
}

}  // namespace

BatchLoss forward_backward(const TopoPriorModel& model, const Mat& role_embeddings,
                           std::span<const EncodedRecord* const> batch,
                           const Mat& eps, const LossWeights& weights,
                           TopoPriorModel* grad,
                           EncoderParams* adapt_encoder_grad) {
  const ModelConfig& c = model.config;
  const auto rows = static_cast<Eigen::Index>(batch.size());
  if (rows == 0) throw ValidationError("empty batch");
  if (eps.rows() != rows || eps.cols() != c.latent_dim)
    throw ConfigError("eps must have one latent-sized row per record");
  if (weights.alpha < 0.0 || weights.beta < 0.0)
    throw ConfigError("alpha and beta must be non-negative");

  Mat h_q(rows, c.embed_dim);
  for (Eigen::Index b = 0; b < rows; ++b) h_q.row(b) = batch[b]->h_q.transpose();

  EncoderCache enc;
  auto [mu, logvar] =
      encoder_forward(model.encoder, c, role_embeddings, batch, h_q, enc);
  const Mat sigma = (0.5 * logvar.array()).exp().matrix();
  const Mat z = mu + sigma.cwiseProduct(eps);

  const Mat prior_pre = model.prior.layer1.forward(h_q);
  const Mat prior_act = relu(prior_pre);
  const Mat prior_m = model.prior.layer2.forward(prior_act);

  std::vector<const CollaborationGraph*> refs(rows);
  for (Eigen::Index b = 0; b < rows; ++b) refs[b] = &batch[b]->graph;
  const double scale = 1.0 / static_cast<double>(rows);
  const Vec row_scale = Vec::Constant(rows, scale);
  Mat dz_decoder;
  const Vec recon = teacher_forced_nll_batch(
      refs, z, h_q, role_embeddings, model.decoder,
      grad != nullptr ? &grad->decoder : nullptr, &row_scale,
      grad != nullptr ? &dz_decoder : nullptr);

  const Mat utility_pred = model.utility.head.forward(z);
  const Mat disc_pre = model.adversary.hidden.forward(z);
  const Mat disc_act = relu(disc_pre);
  const Mat disc_logits = model.adversary.out.forward(disc_act);

  BatchLoss out;
  out.per_record.resize(rows);
  Mat dutility = Mat::Zero(rows, 1);
  Mat ddisc_logits = Mat::Zero(rows, disc_logits.cols());
  for (Eigen::Index b = 0; b < rows; ++b) {
    LossComponents& lc = out.per_record[b];
    lc.recon = recon[b];
    double kl = 0.0;
    for (Eigen::Index j = 0; j < c.latent_dim; ++j) {
      const double diff = mu(b, j) - prior_m(b, j);
      kl += std::exp(logvar(b, j)) + diff * diff - 1.0 - logvar(b, j);
    }
    lc.kl = 0.5 * kl;
    if (batch[b]->teacher_utility) {
      const double err = utility_pred(b, 0) - *batch[b]->teacher_utility;
      lc.task = err * err;
      dutility(b, 0) = weights.alpha * scale * 2.0 * err;
    }
    const int label = batch[b]->domain_id;
    if (label < 0 || label >= disc_logits.cols())
      throw ValidationError("record domain outside discriminator range");
    const Vec logits_row = disc_logits.row(b).transpose();
    const double top = logits_row.maxCoeff();
    const double log_norm = top + std::log((logits_row.array() - top).exp().sum());
    lc.adapt = log_norm - logits_row[label];
    if (grad != nullptr) {
      ddisc_logits.row(b) =
          weights.beta * scale * (logits_row.array() - log_norm).exp().matrix().transpose();
      ddisc_logits(b, label) -= weights.beta * scale;
    }
    lc.total = lc.recon + lc.kl + weights.alpha * lc.task.value_or(0.0) +
               weights.beta * lc.adapt;
    if (!std::isfinite(lc.total))
      throw NumericalError("non-finite loss for record " + std::to_string(b) +
                           " of the batch");
    out.mean_total += lc.total;
  }
  out.mean_total *= scale;
  if (grad == nullptr) return out;

  // Utility head and discriminator receive plain gradients.
  Mat dz_main = dz_decoder;
  dz_main.noalias() +=
      model.utility.head.backward(z, dutility, grad->utility.head);
  const Mat ddisc_act =
      model.adversary.out.backward(disc_act, ddisc_logits, grad->adversary.out);
  const Mat dz_adapt = model.adversary.hidden.backward(
      z, relu_backward(disc_pre, ddisc_act), grad->adversary.hidden);

  // KL against N(m, I).
  const Mat diff = mu - prior_m;
  const Mat dprior_m = -scale * diff;
  const Mat dprior_act =
      model.prior.layer2.backward(prior_act, dprior_m, grad->prior.layer2);
  model.prior.layer1.accumulate(h_q, relu_backward(prior_pre, dprior_act),
                                grad->prior.layer1);

  const Mat half_sigma_eps = 0.5 * sigma.cwiseProduct(eps);
  const Mat dmu_main = dz_main + scale * diff;
  const Mat dlogvar_main = dz_main.cwiseProduct(half_sigma_eps) +
                           (0.5 * scale) * (logvar.array().exp() - 1.0).matrix();
  encoder_backward(model.encoder, c, batch, enc, dmu_main, dlogvar_main,
                   grad->encoder);

  EncoderParams adapt_grad(c);
  encoder_backward(model.encoder, c, batch, enc, dz_adapt,
                   dz_adapt.cwiseProduct(half_sigma_eps), adapt_grad);
  scale_encoder(adapt_grad, weights.grl_coefficient);
  add_encoder(grad->encoder, adapt_grad);
  if (adapt_encoder_grad != nullptr) *adapt_encoder_grad = std::move(adapt_grad);
  return out;
}

LossComponents total_loss(const TopoPriorModel& model, const Mat& role_embeddings,
                          const EncodedRecord& record, const Vec& eps,
                          const LossWeights& weights) {
  const EncodedRecord* batch[] = {&record};
  return forward_backward(model, role_embeddings, batch, eps.transpose(), weights,
                          nullptr)
      .per_record.front();
}

PosteriorGaussian encode_posterior(const TopoPriorModel& model,
                                   const Mat& role_embeddings,
                                   const EncodedRecord& record) {
  const Mat h0 = initial_node_features(record.occupied, role_embeddings);
  const Mat nodes = gcn_forward(record.a_norm, h0, model.encoder);
  const Vec task =
      fuse(record.h_q, pool_graph(nodes, record.occupied), model.encoder);
  return posterior(task, model.encoder, model.config.logvar_clamp);
}

}  // namespace topoprior
