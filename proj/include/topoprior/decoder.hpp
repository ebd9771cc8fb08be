#pragma once

#include <span>
#include <vector>

#include "topoprior/graphs.hpp"
#include "topoprior/model_config.hpp"
#include "topoprior/nn.hpp"

namespace topoprior {

/// Autoregressive generator p(graph | z, q).
///
/// A two-layer GRU reads, at each step, the previous node's role embedding
/// concatenated with the mean embedding of that node's included
/// predecessors. The node head scores every role plus STOP (index
/// pool_size) from (hidden || z || h_q); the edge head scores each earlier
/// node s against the new node t from
/// (emb(v_s) || emb(v_t) || hidden || z || h_q).
struct DecoderParams {
  GruLayer gru0;       // 2 * embed_dim -> hidden
  GruLayer gru1;       // hidden -> hidden
  Affine node_head;    // hidden + latent + embed_dim -> pool_size + 1
  Affine edge_hidden;  // 3 * embed_dim + hidden + latent -> edge_hidden_dim
  Affine edge_out;     // edge_hidden_dim -> 1

  DecoderParams() = default;
  explicit DecoderParams(const ModelConfig& config);
  void initialize(Rng& rng);

  int pool_size() const { return node_head.out_dim() - 1; }
  int stop_index() const { return pool_size(); }
  int embed_dim() const { return gru0.in_dim() / 2; }
  int hidden_dim() const { return gru1.hidden_dim(); }

  template <class F>
  void visit(F&& f) {
    gru0.visit("decoder.gru0", f);
    gru1.visit("decoder.gru1", f);
    node_head.visit("decoder.node_head", f);
    edge_hidden.visit("decoder.edge_hidden", f);
    edge_out.visit("decoder.edge_out", f);
  }
};

struct DecoderState {
  Vec layer0;
  Vec layer1;  // top layer; conditions both heads
};

DecoderState initial_decoder_state(const DecoderParams& params);

/// Feeds one step input (role embedding || edge summary) through the GRU stack.
DecoderState advance(const DecoderState& state, const Vec& input,
                     const DecoderParams& params);

/// Distribution over roles plus STOP (last entry). Used roles get exactly 0.
/// With every role used the result is a point mass on STOP.
Vec step_node(const DecoderState& state, const Vec& z, const Vec& h_q,
              const std::vector<bool>& used_roles, const DecoderParams& params);

/// Edge probabilities s -> t for s = 1..t-1, where `t` is the 1-based
/// position of the newest node in `roles`. Empty for t = 1.
Vec step_edges(int t, const std::vector<int>& roles, const DecoderState& state,
               const Vec& z, const Vec& h_q, const Mat& role_embeddings,
               const DecoderParams& params);

enum class GenerationMode { kGreedy, kSampled };

struct GenerationStep {
  Vec node_distribution;     // pool_size + 1 entries
  int chosen = 0;            // role id, or pool_size for STOP
  Vec edge_probabilities;    // one per earlier node
  std::vector<int> included_sources;
};

struct GenerationTrace {
  std::vector<GenerationStep> steps;
};

struct Generation {
  CollaborationGraph graph;
  GenerationTrace trace;
};

/// Greedy mode takes the arg-max (lowest index on ties) and ignores `rng`.
/// Edge s -> t is kept iff its probability is strictly greater than delta_e.
Generation generate(const Vec& z, const Vec& h_q, double delta_e,
                    GenerationMode mode, Rng* rng, const Mat& role_embeddings,
                    const DecoderParams& params);

/// Lock-step generation for many (z, h_q) rows. `rngs` needs one stream per
/// row in sampled mode.
std::vector<Generation> generate_batch(const Mat& z, const Mat& h_q,
                                       double delta_e, GenerationMode mode,
                                       std::vector<Rng>* rngs,
                                       const Mat& role_embeddings,
                                       const DecoderParams& params);

/// -log p(reference | z, q) under teacher forcing on the canonical order:
/// node cross-entropies including the terminal STOP, plus edge binary
/// cross-entropies over every pair s < t.
double teacher_forced_nll(const CollaborationGraph& reference, const Vec& z,
                          const Vec& h_q, const Mat& role_embeddings,
                          const DecoderParams& params);

/// Batched teacher forcing. `references` must already be canonical. When
/// `grad` is non-null, gradients of sum_b row_scale[b] * nll[b] are
/// accumulated into `grad` and d/dz is written to `dz`.
Vec teacher_forced_nll_batch(std::span<const CollaborationGraph* const> references,
                             const Mat& z, const Mat& h_q,
                             const Mat& role_embeddings,
                             const DecoderParams& params, DecoderParams* grad,
                             const Vec* row_scale, Mat* dz);

}  // namespace topoprior
