#include "topoprior/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topoprior/error.hpp"

namespace topoprior {

namespace {

int context_dim(const DecoderParams& p) {
  return p.node_head.in_dim();
}

/// Rows [h_top | z | h_q].
Mat context(const Mat& top, const Mat& z, const Mat& h_q) {
  Mat ctx(top.rows(), top.cols() + z.cols() + h_q.cols());
  ctx << top, z, h_q;
  return ctx;
}

Vec context(const Vec& top, const Vec& z, const Vec& h_q) {
  Vec ctx(top.size() + z.size() + h_q.size());
  ctx << top, z, h_q;
  return ctx;
}

void check_shapes(const DecoderParams& p, Eigen::Index z_dim, Eigen::Index q_dim,
                  const Mat& role_embeddings) {
  if (p.hidden_dim() + z_dim + q_dim != context_dim(p))
    throw ConfigError("decoder context width mismatch");
  if (role_embeddings.rows() != p.pool_size() ||
      role_embeddings.cols() != p.embed_dim())
    throw ConfigError("role embedding table does not match the decoder");
}

/// Column blocks of edge_hidden.weight.
struct EdgeBlocks {
  Eigen::Index embed;
  Eigen::Index ctx;
};

EdgeBlocks edge_blocks(const DecoderParams& p) {
  return {p.embed_dim(), context_dim(p)};
}

}  // namespace

DecoderParams::DecoderParams(const ModelConfig& c)
    : gru0(2 * c.embed_dim, c.hidden_dim),
      gru1(c.hidden_dim, c.hidden_dim),
      node_head(c.hidden_dim + c.latent_dim + c.embed_dim, c.pool_size + 1),
      edge_hidden(3 * c.embed_dim + c.hidden_dim + c.latent_dim,
                  c.edge_hidden_dim),
      edge_out(c.edge_hidden_dim, 1) {}

void DecoderParams::initialize(Rng& rng) {
  init_fan_in(gru0.w_ih, gru0.hidden_dim(), rng);
  init_fan_in(gru0.w_hh, gru0.hidden_dim(), rng);
  init_fan_in(gru1.w_ih, gru1.hidden_dim(), rng);
  init_fan_in(gru1.w_hh, gru1.hidden_dim(), rng);
  init_fan_in(node_head.weight, node_head.in_dim(), rng);
  init_fan_in(edge_hidden.weight, edge_hidden.in_dim(), rng);
  init_fan_in(edge_out.weight, edge_out.in_dim(), rng);
}

DecoderState initial_decoder_state(const DecoderParams& params) {
  return {Vec::Zero(params.gru0.hidden_dim()), Vec::Zero(params.hidden_dim())};
}

DecoderState advance(const DecoderState& state, const Vec& input,
                     const DecoderParams& params) {
  DecoderState next;
  next.layer0 = gru_forward(params.gru0, input.transpose(),
                            state.layer0.transpose(), nullptr)
                    .transpose();
  next.layer1 = gru_forward(params.gru1, next.layer0.transpose(),
                            state.layer1.transpose(), nullptr)
                    .transpose();
  return next;
}

Vec step_node(const DecoderState& state, const Vec& z, const Vec& h_q,
              const std::vector<bool>& used_roles, const DecoderParams& params) {
  const int n = params.pool_size();
  if (static_cast<int>(used_roles.size()) != n)
    throw ConfigError("used-role mask must cover the pool");
  std::vector<bool> allowed(n + 1, true);
  for (int r = 0; r < n; ++r) allowed[r] = !used_roles[r];
  const Vec logits = params.node_head.apply(context(state.layer1, z, h_q));
  return masked_softmax(logits, allowed);
}

Vec step_edges(int t, const std::vector<int>& roles, const DecoderState& state,
               const Vec& z, const Vec& h_q, const Mat& role_embeddings,
               const DecoderParams& params) {
  if (t < 1 || t > static_cast<int>(roles.size()))
    throw ValidationError("new node index out of range");
  if (t == 1) return Vec();
  const Eigen::Index d = params.embed_dim();
  const Vec ctx = context(state.layer1, z, h_q);
  Vec input(2 * d + ctx.size());
  Vec probs(t - 1);
  for (int s = 1; s < t; ++s) {
    input << role_embeddings.row(roles[s - 1]).transpose(),
        role_embeddings.row(roles[t - 1]).transpose(), ctx;
    const Vec hidden = relu(params.edge_hidden.apply(input));
    probs[s - 1] = sigmoid(params.edge_out.apply(hidden)[0]);
  }
  return probs;
}

std::vector<Generation> generate_batch(const Mat& z, const Mat& h_q,
                                       double delta_e, GenerationMode mode,
                                       std::vector<Rng>* rngs,
                                       const Mat& role_embeddings,
                                       const DecoderParams& params) {
  if (delta_e < 0.0 || delta_e > 1.0)
    throw ValidationError("delta_e must lie in [0, 1]");
  check_shapes(params, z.cols(), h_q.cols(), role_embeddings);
  const Eigen::Index rows = z.rows();
  if (h_q.rows() != rows) throw ConfigError("z and h_q row counts differ");
  if (mode == GenerationMode::kSampled &&
      (rngs == nullptr || static_cast<Eigen::Index>(rngs->size()) < rows))
    throw ConfigError("sampled generation needs one rng stream per row");

  const int n = params.pool_size();
  const Eigen::Index d = params.embed_dim();
  const auto blocks = edge_blocks(params);
  const Mat source_part =
      role_embeddings * params.edge_hidden.weight.leftCols(blocks.embed).transpose();
  const Mat target_part =
      role_embeddings *
      params.edge_hidden.weight.middleCols(blocks.embed, blocks.embed).transpose();
  const Vec edge_w = params.edge_out.weight.row(0).transpose();
  const double edge_b = params.edge_out.bias[0];

  std::vector<Generation> out(rows);
  std::vector<std::vector<bool>> used(rows, std::vector<bool>(n, false));
  std::vector<bool> active(rows, true);
  Mat input = Mat::Zero(rows, 2 * d);
  Mat h0 = Mat::Zero(rows, params.gru0.hidden_dim());
  Mat h1 = Mat::Zero(rows, params.hidden_dim());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int step = 0; step <= n; ++step) {
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; }))
      break;
    h0 = gru_forward(params.gru0, input, h0, nullptr);
    h1 = gru_forward(params.gru1, h0, h1, nullptr);
    const Mat ctx = context(h1, z, h_q);
    const Mat logits = params.node_head.forward(ctx);
    Mat edge_ctx =
        ctx * params.edge_hidden.weight.rightCols(blocks.ctx).transpose();
    edge_ctx.rowwise() += params.edge_hidden.bias.transpose();

    for (Eigen::Index b = 0; b < rows; ++b) {
      if (!active[b]) continue;
      std::vector<bool> allowed(n + 1, true);
      for (int r = 0; r < n; ++r) allowed[r] = !used[b][r];
      GenerationStep rec;
      rec.node_distribution = masked_softmax(logits.row(b).transpose(), allowed);
      int choice = n;
      if (mode == GenerationMode::kGreedy) {
        double best = -1.0;
        for (int i = 0; i <= n; ++i)
          if (allowed[i] && rec.node_distribution[i] > best) {
            best = rec.node_distribution[i];
            choice = i;
          }
      } else {
        const double u = unit((*rngs)[b]);
        double acc = 0.0;
        choice = -1;
        for (int i = 0; i <= n; ++i) {
          if (!allowed[i]) continue;
          acc += rec.node_distribution[i];
          if (u < acc) {
            choice = i;
            break;
          }
        }
        if (choice < 0)  // rounding left u above the running total
          for (int i = n; i >= 0; --i)
            if (allowed[i] && rec.node_distribution[i] > 0.0) {
              choice = i;
              break;
            }
      }
      rec.chosen = choice;
      auto& graph = out[b].graph;
      if (choice == n) {
        active[b] = false;
        out[b].trace.steps.push_back(std::move(rec));
        continue;
      }
      used[b][choice] = true;
      graph.roles.push_back(choice);
      const int t = graph.num_nodes() - 1;  // 0-based position of new node
      rec.edge_probabilities.resize(t);
      Vec summary = Vec::Zero(d);
      const Vec base = target_part.row(choice).transpose() +
                       edge_ctx.row(b).transpose();
      for (int s = 0; s < t; ++s) {
        const Vec hidden =
            (source_part.row(graph.roles[s]).transpose() + base).cwiseMax(0.0);
        const double p = sigmoid(edge_w.dot(hidden) + edge_b);
        rec.edge_probabilities[s] = p;
        if (p > delta_e) {
          graph.edges.push_back({s, t});
          rec.included_sources.push_back(s);
          summary += role_embeddings.row(graph.roles[s]).transpose();
        }
      }
      if (!rec.included_sources.empty())
        summary /= static_cast<double>(rec.included_sources.size());
      input.row(b).head(d) = role_embeddings.row(choice);
      input.row(b).tail(d) = summary.transpose();
      out[b].trace.steps.push_back(std::move(rec));
      if (graph.num_nodes() == n) active[b] = false;  // pool exhausted
    }
  }
  return out;
}

Generation generate(const Vec& z, const Vec& h_q, double delta_e,
                    GenerationMode mode, Rng* rng, const Mat& role_embeddings,
                    const DecoderParams& params) {
  std::vector<Rng> streams;
  if (mode == GenerationMode::kSampled) {
    if (rng == nullptr) throw ConfigError("sampled generation needs an rng");
    streams.push_back(*rng);
  }
  auto result = generate_batch(z.transpose(), h_q.transpose(), delta_e, mode,
                               &streams, role_embeddings, params);
  if (mode == GenerationMode::kSampled) *rng = streams.front();
  return std::move(result.front());
}

Vec teacher_forced_nll_batch(std::span<const CollaborationGraph* const> refs,
                             const Mat& z, const Mat& h_q,
                             const Mat& role_embeddings,
                             const DecoderParams& params, DecoderParams* grad,
                             const Vec* row_scale, Mat* dz) {
  check_shapes(params, z.cols(), h_q.cols(), role_embeddings);
  const auto rows = static_cast<Eigen::Index>(refs.size());
  if (z.rows() != rows || h_q.rows() != rows)
    throw ConfigError("batch rows disagree");
  const int n = params.pool_size();
  const Eigen::Index d = params.embed_dim();
  const auto blocks = edge_blocks(params);
  const bool backward = grad != nullptr;

  std::vector<int> steps(rows);
  int max_steps = 0;
  for (Eigen::Index b = 0; b < rows; ++b) {
    const int nodes = refs[b]->num_nodes();
    steps[b] = nodes + (nodes < n ? 1 : 0);
    max_steps = std::max(max_steps, steps[b]);
  }

  // Adjacency lookup per row over node positions.
  std::vector<std::vector<std::vector<bool>>> adj(rows);
  for (Eigen::Index b = 0; b < rows; ++b) {
    const int nodes = refs[b]->num_nodes();
    adj[b].assign(nodes, std::vector<bool>(nodes, false));
    for (const auto& e : refs[b]->edges) adj[b][e.source][e.target] = true;
  }

  const Mat source_part =
      role_embeddings * params.edge_hidden.weight.leftCols(blocks.embed).transpose();
  const Mat target_part =
      role_embeddings *
      params.edge_hidden.weight.middleCols(blocks.embed, blocks.embed).transpose();
  const Vec edge_w = params.edge_out.weight.row(0).transpose();
  const double edge_b = params.edge_out.bias[0];
  const Eigen::Index edge_dim = params.edge_hidden.out_dim();

  Vec nll = Vec::Zero(rows);
  std::vector<GruCache> cache0(backward ? max_steps : 0);
  std::vector<GruCache> cache1(backward ? max_steps : 0);
  std::vector<Mat> ctx_steps(backward ? max_steps : 0);
  std::vector<Mat> dlogit_steps(backward ? max_steps : 0);
  std::vector<Mat> dedge_ctx_steps(backward ? max_steps : 0);
  Mat d_source = backward ? Mat::Zero(n, edge_dim) : Mat();
  Mat d_target = backward ? Mat::Zero(n, edge_dim) : Mat();

  Mat input = Mat::Zero(rows, 2 * d);
  Mat h0 = Mat::Zero(rows, params.gru0.hidden_dim());
  Mat h1 = Mat::Zero(rows, params.hidden_dim());

  for (int t = 0; t < max_steps; ++t) {
    if (t > 0) {
      input.setZero();
      for (Eigen::Index b = 0; b < rows; ++b) {
        const auto& g = *refs[b];
        if (t - 1 >= g.num_nodes()) continue;
        const int prev = t - 1;
        input.row(b).head(d) = role_embeddings.row(g.roles[prev]);
        int count = 0;
        Vec summary = Vec::Zero(d);
        for (int s = 0; s < prev; ++s)
          if (adj[b][s][prev]) {
            summary += role_embeddings.row(g.roles[s]).transpose();
            ++count;
          }
        if (count > 0) input.row(b).tail(d) = summary.transpose() / count;
      }
    }
    h0 = gru_forward(params.gru0, input, h0, backward ? &cache0[t] : nullptr);
    h1 = gru_forward(params.gru1, h0, h1, backward ? &cache1[t] : nullptr);
    Mat ctx = context(h1, z, h_q);
    const Mat logits = params.node_head.forward(ctx);
    Mat edge_ctx =
        ctx * params.edge_hidden.weight.rightCols(blocks.ctx).transpose();
    edge_ctx.rowwise() += params.edge_hidden.bias.transpose();

    Mat dlogits;
    Mat dedge_ctx;
    if (backward) {
      dlogits = Mat::Zero(rows, n + 1);
      dedge_ctx = Mat::Zero(rows, edge_dim);
    }

    for (Eigen::Index b = 0; b < rows; ++b) {
      if (t >= steps[b]) continue;
      const auto& g = *refs[b];
      const double scale = row_scale != nullptr ? (*row_scale)[b] : 1.0;
      // Node decision.
      std::vector<bool> allowed(n + 1, true);
      for (int s = 0; s < t; ++s) allowed[g.roles[s]] = false;
      const int target = t < g.num_nodes() ? g.roles[t] : n;
      const Vec logit_row = logits.row(b).transpose();
      double top = -std::numeric_limits<double>::infinity();
      for (int i = 0; i <= n; ++i)
        if (allowed[i]) top = std::max(top, logit_row[i]);
      double total = 0.0;
      for (int i = 0; i <= n; ++i)
        if (allowed[i]) total += std::exp(logit_row[i] - top);
      const double log_norm = top + std::log(total);
      nll[b] += log_norm - logit_row[target];
      if (backward) {
        for (int i = 0; i <= n; ++i)
          if (allowed[i])
            dlogits(b, i) = scale * std::exp(logit_row[i] - log_norm);
        dlogits(b, target) -= scale;
      }
      // Edges into node t from every earlier node.
      if (t == 0 || t >= g.num_nodes()) continue;
      const Vec base = target_part.row(g.roles[t]).transpose() +
                       edge_ctx.row(b).transpose();
      for (int s = 0; s < t; ++s) {
        const Vec pre = source_part.row(g.roles[s]).transpose() + base;
        const Vec hidden = pre.cwiseMax(0.0);
        const double logit = edge_w.dot(hidden) + edge_b;
        const double y = adj[b][s][t] ? 1.0 : 0.0;
        nll[b] += softplus(logit) - y * logit;
        if (!backward) continue;
        const double dlogit = scale * (sigmoid(logit) - y);
        grad->edge_out.weight.row(0) += dlogit * hidden.transpose();
        grad->edge_out.bias[0] += dlogit;
        const Vec dpre =
            (pre.array() > 0.0).select(dlogit * edge_w, 0.0).matrix();
        d_source.row(g.roles[s]) += dpre.transpose();
        d_target.row(g.roles[t]) += dpre.transpose();
        dedge_ctx.row(b) += dpre.transpose();
      }
    }
    if (backward) {
      ctx_steps[t] = std::move(ctx);
      dlogit_steps[t] = std::move(dlogits);
      dedge_ctx_steps[t] = std::move(dedge_ctx);
    }
  }

  if (!backward) return nll;

  const Eigen::Index hd = params.hidden_dim();
  const Eigen::Index zd = z.cols();
  if (dz != nullptr) *dz = Mat::Zero(rows, zd);
  Mat dh0_next = Mat::Zero(rows, params.gru0.hidden_dim());
  Mat dh1_next = Mat::Zero(rows, hd);
  auto edge_ctx_weight = params.edge_hidden.weight.rightCols(blocks.ctx);
  for (int t = max_steps - 1; t >= 0; --t) {
    const Mat& ctx = ctx_steps[t];
    params.node_head.accumulate(ctx, dlogit_steps[t], grad->node_head);
    grad->edge_hidden.weight.rightCols(blocks.ctx).noalias() +=
        dedge_ctx_steps[t].transpose() * ctx;
    grad->edge_hidden.bias.noalias() +=
        dedge_ctx_steps[t].colwise().sum().transpose();
    Mat dctx = dlogit_steps[t] * params.node_head.weight;
    dctx.noalias() += dedge_ctx_steps[t] * edge_ctx_weight;
    if (dz != nullptr) dz->noalias() += dctx.middleCols(hd, zd);
    const Mat dh1 = dctx.leftCols(hd) + dh1_next;
    Mat dx1;
    dh1_next = gru_backward(params.gru1, cache1[t], dh1, grad->gru1, &dx1);
    const Mat dh0 = dx1 + dh0_next;
    dh0_next = gru_backward(params.gru0, cache0[t], dh0, grad->gru0, nullptr);
  }
  grad->edge_hidden.weight.leftCols(blocks.embed).noalias() +=
      d_source.transpose() * role_embeddings;
  grad->edge_hidden.weight.middleCols(blocks.embed, blocks.embed).noalias() +=
      d_target.transpose() * role_embeddings;
  return nll;
}

double teacher_forced_nll(const CollaborationGraph& reference, const Vec& z,
                          const Vec& h_q, const Mat& role_embeddings,
                          const DecoderParams& params) {
  require_valid(reference, params.pool_size());
  const CollaborationGraph canonical = canonicalize(reference);
  const CollaborationGraph* refs[] = {&canonical};
  return teacher_forced_nll_batch(refs, z.transpose(), h_q.transpose(),
                                  role_embeddings, params, nullptr, nullptr,
                                  nullptr)[0];
}

}  // namespace topoprior
