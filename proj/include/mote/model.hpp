#pragma once

#include "mote/router.hpp"
#include "mote/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mote {

struct ModelConfig {
  int vocab_size = 55;
  int seq_len_max = 8;
  int d_model = 64;
  int n_layers = 6;
  int n_routed_experts = 32;
  int n_shared_experts = 1;  // always-on; fixed at 1
  int top_k = 4;
  int d_expert_hidden = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Offsets of every tensor inside the flat parameter vector. One routed
/// expert's parameters are contiguous so an expert can be sliced (and
/// e.g. randomized) as a unit.
struct ParamLayout {
  int V, S, d, L, E, h;

  Index tok_emb = 0, pos_emb = 0;
  Index layers_begin = 0, layer_stride = 0;
  // offsets within one layer block
  Index ln1 = 0, wq = 0, wk = 0, wv = 0, wo = 0, ln2 = 0, wr = 0;
  Index shared_w1 = 0, shared_w2 = 0, experts = 0, expert_stride = 0;
  Index final_ln = 0, w_out = 0;
  Index total = 0;

  explicit ParamLayout(const ModelConfig& c);

  Index layer(int l) const { return layers_begin + l * layer_stride; }
  Index expert(int l, int e) const {
    return layer(l) + experts + e * expert_stride;
  }
};

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  VecX flat;

  explicit ModelParams(const ModelConfig& c)
      : config(c), layout(c), flat(VecX::Zero(layout.total)) {}

  using Map = Eigen::Map<MatX>;
  using CMap = Eigen::Map<const MatX>;

  Map mat(Index off, int rows, int cols) {
    return Map(flat.data() + off, rows, cols);
  }
  CMap mat(Index off, int rows, int cols) const {
    return CMap(flat.data() + off, rows, cols);
  }

  Map tok_emb() { return mat(layout.tok_emb, layout.V, layout.d); }
  CMap tok_emb() const { return mat(layout.tok_emb, layout.V, layout.d); }
  Map pos_emb() { return mat(layout.pos_emb, layout.S, layout.d); }
  CMap pos_emb() const { return mat(layout.pos_emb, layout.S, layout.d); }

  Map ln1_gain(int l) { return mat(layout.layer(l) + layout.ln1, layout.d, 1); }
  CMap ln1_gain(int l) const {
    return mat(layout.layer(l) + layout.ln1, layout.d, 1);
  }
  Map ln2_gain(int l) { return mat(layout.layer(l) + layout.ln2, layout.d, 1); }
  CMap ln2_gain(int l) const {
    return mat(layout.layer(l) + layout.ln2, layout.d, 1);
  }
  Map wq(int l) { return mat(layout.layer(l) + layout.wq, layout.d, layout.d); }
  CMap wq(int l) const {
    return mat(layout.layer(l) + layout.wq, layout.d, layout.d);
  }
  Map wk(int l) { return mat(layout.layer(l) + layout.wk, layout.d, layout.d); }
  CMap wk(int l) const {
    return mat(layout.layer(l) + layout.wk, layout.d, layout.d);
  }
  Map wv(int l) { return mat(layout.layer(l) + layout.wv, layout.d, layout.d); }
  CMap wv(int l) const {
    return mat(layout.layer(l) + layout.wv, layout.d, layout.d);
  }
  Map wo(int l) { return mat(layout.layer(l) + layout.wo, layout.d, layout.d); }
  CMap wo(int l) const {
    return mat(layout.layer(l) + layout.wo, layout.d, layout.d);
  }
  Map wr(int l) { return mat(layout.layer(l) + layout.wr, layout.d, layout.E); }
  CMap wr(int l) const {
    return mat(layout.layer(l) + layout.wr, layout.d, layout.E);
  }
  Map shared_w1(int l) {
    return mat(layout.layer(l) + layout.shared_w1, layout.d, layout.h);
  }
  CMap shared_w1(int l) const {
    return mat(layout.layer(l) + layout.shared_w1, layout.d, layout.h);
  }
  Map shared_w2(int l) {
    return mat(layout.layer(l) + layout.shared_w2, layout.h, layout.d);
  }
  CMap shared_w2(int l) const {
    return mat(layout.layer(l) + layout.shared_w2, layout.h, layout.d);
  }
  Map expert_w1(int l, int e) {
    return mat(layout.expert(l, e), layout.d, layout.h);
  }
  CMap expert_w1(int l, int e) const {
    return mat(layout.expert(l, e), layout.d, layout.h);
  }
  Map expert_w2(int l, int e) {
    return mat(layout.expert(l, e) + layout.d * layout.h, layout.h, layout.d);
  }
  CMap expert_w2(int l, int e) const {
    return mat(layout.expert(l, e) + layout.d * layout.h, layout.h, layout.d);
  }
  Map final_ln_gain() { return mat(layout.final_ln, layout.d, 1); }
  CMap final_ln_gain() const { return mat(layout.final_ln, layout.d, 1); }
  Map w_out() { return mat(layout.w_out, layout.d, layout.V); }
  CMap w_out() const { return mat(layout.w_out, layout.d, layout.V); }

  /// All parameters of one routed expert, as a contiguous slice.
  Eigen::VectorBlock<VecX> expert_params(int l, int e) {
    return flat.segment(layout.expert(l, e), layout.expert_stride);
  }
};

/// Everything recorded while processing one token sequence: per-token,
/// per-layer gate decisions (exactly n_layers per token) and the logits
/// for every position.
struct ForwardTrace {
  TokenSeq tokens;
  std::vector<bool> is_completion;                   // per token
  std::vector<std::vector<GateDecision>> decisions;  // [token][layer]
  MatX logits;                                       // T x vocab
  int degenerate_decisions = 0;  // decisions left empty by suppression
};

// Intermediate activations kept for backprop. Only the training path
// fills this.
struct LayerCache {
  MatX x_in, ln1_out, q, k, v, attn_ctx, x_mid, ln2_out;  // N x d
  VecX rstd1, rstd2;                                      // N
  std::vector<MatX> attn_probs;                           // per sequence
  MatX router_probs;                                      // N x E
  std::vector<GateDecision> decisions;                    // N
  MatX shared_pre;                                        // N x h
  MatX expert_pre;  // N x (top_k * h), slot-major
};

struct ForwardCache {
  std::vector<int> seq_offsets;  // B + 1
  MatX x0;                       // N x d
  std::vector<LayerCache> layers;
  MatX x_final, lnf_out;  // N x d
  VecX rstd_f;            // N
  MatX logits;            // N x vocab
};

namespace nn {
ArrX silu(const ArrX& a);
MatX silu(const MatX& a);
MatX silu_grad(const MatX& a);
}  // namespace nn

/// Deterministic parameter initialization for the given config/seed.
ModelParams init_model(const ModelConfig& config);

/// Shared forward core over a ragged batch of sequences. `tuning` applies
/// router overrides, `cache` enables backprop, `traces` records gate
/// decisions per sequence. Any output pointer may be null.
void forward_batch(const ModelParams& params,
                   const std::vector<TokenSeq>& seqs,
                   const LayerTuning* tuning, ForwardCache* cache,
                   std::vector<ForwardTrace>* traces);

ForwardTrace forward(const ModelParams& params, const TokenSeq& tokens,
                     const TuningConfig* tuning = nullptr);

struct GenerateResult {
  TokenSeq tokens;  // prompt + completion
  ForwardTrace trace;
};

/// Greedy decoding. Stops after max_new tokens, at EOS, or when the
/// context window is full, whichever comes first.
GenerateResult generate(const ModelParams& params, const TokenSeq& prompt,
                        int max_new, const TuningConfig* tuning = nullptr);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mote
