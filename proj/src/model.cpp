#include "mote/model.hpp"

#include "mote/io.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace mote {

namespace {

constexpr Real kRmsEps = 1e-5;

void rmsnorm_rows(const MatX& x, const Eigen::Map<const MatX>& gain, MatX& out,
                  VecX& rstd) {
  const Real d = static_cast<Real>(x.cols());
  rstd = (x.array().square().rowwise().sum() / d + kRmsEps)
             .sqrt()
             .inverse()
             .matrix();
  out = (x.array().colwise() * rstd.array()).rowwise() *
        gain.col(0).transpose().array();
}

}  // namespace

namespace nn {

ArrX silu(const ArrX& a) { return a / (1.0 + (-a).exp()); }

MatX silu(const MatX& a) {
  return (a.array() / (1.0 + (-a.array()).exp())).matrix();
}

// d/da [a * sigmoid(a)] = sigmoid(a) * (1 + a * (1 - sigmoid(a)))
MatX silu_grad(const MatX& a) {
  Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.array()).exp());
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

}  // namespace nn

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (vocab_size < 4) fail("vocab_size must be >= 4");
  if (seq_len_max < 1) fail("seq_len_max must be >= 1");
  if (d_model < 1) fail("d_model must be >= 1");
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_routed_experts < 1) fail("n_routed_experts must be >= 1");
  if (n_shared_experts != 1) fail("n_shared_experts is fixed at 1");
  if (top_k < 1 || top_k > n_routed_experts)
    fail("top_k must be in [1, n_routed_experts]");
  if (d_expert_hidden < 1) fail("d_expert_hidden must be >= 1");
}

ParamLayout::ParamLayout(const ModelConfig& c)
    : V(c.vocab_size),
      S(c.seq_len_max),
      d(c.d_model),
      L(c.n_layers),
      E(c.n_routed_experts),
      h(c.d_expert_hidden) {
  c.validate();
  Index off = 0;
  auto alloc = [&off](Index n) {
    Index at = off;
    off += n;
    return at;
  };
  tok_emb = alloc(static_cast<Index>(V) * d);
  pos_emb = alloc(static_cast<Index>(S) * d);

  // layer-relative offsets
  Index loff = 0;
  auto lalloc = [&loff](Index n) {
    Index at = loff;
    loff += n;
    return at;
  };
  ln1 = lalloc(d);
  wq = lalloc(static_cast<Index>(d) * d);
  wk = lalloc(static_cast<Index>(d) * d);
  wv = lalloc(static_cast<Index>(d) * d);
  wo = lalloc(static_cast<Index>(d) * d);
  ln2 = lalloc(d);
  wr = lalloc(static_cast<Index>(d) * E);
  shared_w1 = lalloc(static_cast<Index>(d) * h);
  shared_w2 = lalloc(static_cast<Index>(h) * d);
  expert_stride = static_cast<Index>(d) * h + static_cast<Index>(h) * d;
  experts = lalloc(E * expert_stride);
  layer_stride = loff;

  layers_begin = alloc(static_cast<Index>(L) * layer_stride);
  final_ln = alloc(d);
  w_out = alloc(static_cast<Index>(d) * V);
  total = off;
}

ModelParams init_model(const ModelConfig& config) {
  config.validate();
  ModelParams p(config);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<Real> normal(0.0, 1.0);
  for (Index i = 0; i < p.layout.total; ++i) p.flat[i] = normal(rng);

  const Real d_scale = 1.0 / std::sqrt(static_cast<Real>(config.d_model));
  const Real h_scale = 1.0 / std::sqrt(static_cast<Real>(config.d_expert_hidden));

  p.tok_emb() *= 0.08;
  p.pos_emb() *= 0.08;
  for (int l = 0; l < config.n_layers; ++l) {
    p.ln1_gain(l).setOnes();
    p.ln2_gain(l).setOnes();
    p.wq(l) *= d_scale;
    p.wk(l) *= d_scale;
    p.wv(l) *= d_scale;
    p.wo(l) *= d_scale;
    p.wr(l) *= d_scale;
    p.shared_w1(l) *= d_scale;
    p.shared_w2(l) *= h_scale;
    for (int e = 0; e < config.n_routed_experts; ++e) {
      p.expert_w1(l, e) *= d_scale;
      p.expert_w2(l, e) *= h_scale;
    }
  }
  p.final_ln_gain().setOnes();
  p.w_out() *= d_scale;

  for (int l = 0; l < config.n_layers; ++l)
    for (int e = 0; e < config.n_routed_experts; ++e)
      if (p.wr(l).col(e).norm() == 0.0)
        throw NumericError("init_model: degenerate router column");
  return p;
}

void forward_batch(const ModelParams& params,
                   const std::vector<TokenSeq>& seqs,
                   const LayerTuning* tuning, ForwardCache* cache,
                   std::vector<ForwardTrace>* traces) {
  const ModelConfig& c = params.config;
  const int B = static_cast<int>(seqs.size());
  const int d = c.d_model;
  const int E = c.n_routed_experts;
  const int k = c.top_k;
  const int h = c.d_expert_hidden;
  const int L = c.n_layers;

  if (cache && tuning && !tuning->empty())
    throw ConfigError("forward_batch: training cache with router overrides");

  std::vector<int> offsets(B + 1, 0);
  for (int b = 0; b < B; ++b) {
    const auto& s = seqs[b];
    if (s.empty()) throw DataError("forward: empty token sequence");
    if (static_cast<int>(s.size()) > c.seq_len_max)
      throw DataError("forward: sequence longer than seq_len_max");
    for (TokenId t : s)
      if (t < 0 || t >= c.vocab_size) {
        std::ostringstream os;
        os << "forward: token id " << t << " outside vocabulary of size "
           << c.vocab_size;
        throw DataError(os.str());
      }
    offsets[b + 1] = offsets[b] + static_cast<int>(s.size());
  }
  const int N = offsets[B];

  MatX x(N, d);
  {
    auto tok = params.tok_emb();
    auto pos = params.pos_emb();
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < static_cast<int>(seqs[b].size()); ++t)
        x.row(offsets[b] + t) = tok.row(seqs[b][t]) + pos.row(t);
  }

  if (cache) {
    cache->seq_offsets = offsets;
    cache->x0 = x;
    cache->layers.assign(L, LayerCache{});
  }

  // per-layer decisions, kept for traces
  std::vector<std::vector<GateDecision>> all_decisions;
  if (traces) all_decisions.resize(L);
  int degenerate = 0;

  const Real attn_scale = 1.0 / std::sqrt(static_cast<Real>(d));
  MatX ln_out(N, d), q(N, d), kk(N, d), v(N, d), ctx(N, d);
  VecX rstd(N);

  for (int l = 0; l < L; ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    // attention block
    rmsnorm_rows(x, params.ln1_gain(l), ln_out, rstd);
    q.noalias() = ln_out * params.wq(l);
    kk.noalias() = ln_out * params.wk(l);
    v.noalias() = ln_out * params.wv(l);
    if (lc) {
      lc->ln1_out = ln_out;
      lc->rstd1 = rstd;
      lc->q = q;
      lc->k = kk;
      lc->v = v;
      lc->attn_probs.resize(B);
    }
    for (int b = 0; b < B; ++b) {
      const int o = offsets[b];
      const int T = offsets[b + 1] - o;
      MatX scores = q.middleRows(o, T) * kk.middleRows(o, T).transpose() *
                    attn_scale;
      for (int i = 0; i < T; ++i) {
        // causal: softmax over positions <= i
        auto row = scores.row(i).head(i + 1);
        const Real m = row.maxCoeff();
        ArrX e = (row.transpose().array() - m).exp();
        const Real sum = e.sum();
        scores.row(i).head(i + 1) = (e / sum).matrix().transpose();
        scores.row(i).tail(T - i - 1).setZero();
      }
      ctx.middleRows(o, T).noalias() = scores * v.middleRows(o, T);
      if (lc) lc->attn_probs[b] = scores;
    }
    x.noalias() += ctx * params.wo(l);
    if (lc) {
      lc->attn_ctx = ctx;
      lc->x_mid = x;
    }

    // MoE block
    rmsnorm_rows(x, params.ln2_gain(l), ln_out, rstd);
    MatX router_logits(N, E);
    router_logits.noalias() = ln_out * params.wr(l);
    if (lc) {
      lc->ln2_out = ln_out;
      lc->rstd2 = rstd;
      lc->router_probs.resize(N, E);
      lc->shared_pre.resize(N, h);
      lc->expert_pre.resize(N, k * h);
      lc->decisions.resize(N);
    }

    std::vector<GateDecision> decisions(N);
    for (int n = 0; n < N; ++n) {
      VecX logit_row = router_logits.row(n).transpose();
      GateDecision dec = route(logit_row, k, l);
      if (lc) lc->router_probs.row(n) = softmax(logit_row).transpose();
      if (tuning) {
        dec = apply_suppression(dec, tuning->suppressed[l]);
        if (!tuning->stimulated[l].empty())
          dec = apply_stimulation(dec, tuning->stimulated[l], k);
      }
      if (dec.entries.empty()) ++degenerate;
      decisions[n] = std::move(dec);
    }

    // shared expert, always on
    MatX shared_pre(N, h);
    shared_pre.noalias() = ln_out * params.shared_w1(l);
    MatX moe(N, d);
    moe.noalias() = nn::silu(shared_pre) * params.shared_w2(l);
    if (lc) lc->shared_pre = shared_pre;

    // routed experts, grouped by expert id
    std::vector<std::vector<std::pair<int, int>>> groups(E);  // (token, slot)
    for (int n = 0; n < N; ++n)
      for (int s = 0; s < static_cast<int>(decisions[n].entries.size()); ++s)
        groups[decisions[n].entries[s].expert_id].push_back({n, s});

    for (int e = 0; e < E; ++e) {
      const auto& g = groups[e];
      if (g.empty()) continue;
      const int G = static_cast<int>(g.size());
      MatX xg(G, d);
      for (int i = 0; i < G; ++i) xg.row(i) = ln_out.row(g[i].first);
      MatX ag(G, h);
      ag.noalias() = xg * params.expert_w1(l, e);
      MatX yg(G, d);
      yg.noalias() = nn::silu(ag) * params.expert_w2(l, e);
      for (int i = 0; i < G; ++i) {
        const auto [n, s] = g[i];
        moe.row(n) += decisions[n].entries[s].weight * yg.row(i);
        if (lc) lc->expert_pre.block(n, s * h, 1, h) = ag.row(i);
      }
    }
    x += moe;

    if (lc) lc->decisions = decisions;
    if (traces) all_decisions[l] = std::move(decisions);
  }

  rmsnorm_rows(x, params.final_ln_gain(), ln_out, rstd);
  MatX logits(N, c.vocab_size);
  logits.noalias() = ln_out * params.w_out();
  if (!logits.allFinite())
    throw NumericError("forward: non-finite logits");

  if (cache) {
    cache->x_final = x;
    cache->lnf_out = ln_out;
    cache->rstd_f = rstd;
    cache->logits = logits;
  }
  if (traces) {
    traces->assign(B, ForwardTrace{});
    for (int b = 0; b < B; ++b) {
      ForwardTrace& tr = (*traces)[b];
      const int o = offsets[b];
      const int T = offsets[b + 1] - o;
      tr.tokens = seqs[b];
      tr.is_completion.assign(T, false);
      tr.logits = logits.middleRows(o, T);
      tr.decisions.resize(T);
      for (int t = 0; t < T; ++t) {
        tr.decisions[t].reserve(L);
        for (int l = 0; l < L; ++l)
          tr.decisions[t].push_back(all_decisions[l][o + t]);
      }
    }
    for (int b = 0; b < B; ++b) {
      int n = 0;
      for (const auto& per_token : (*traces)[b].decisions)
        for (const auto& dec : per_token)
          if (dec.entries.empty()) ++n;
      (*traces)[b].degenerate_decisions = n;
    }
  }
  (void)degenerate;
}

ForwardTrace forward(const ModelParams& params, const TokenSeq& tokens,
                     const TuningConfig* tuning) {
  LayerTuning lt;
  const LayerTuning* ltp = nullptr;
  if (tuning && !tuning->empty()) {
    lt = split_by_layer(*tuning, params.config.n_layers,
                        params.config.n_routed_experts, params.config.top_k);
    ltp = &lt;
  }
  std::vector<ForwardTrace> traces;
  forward_batch(params, {tokens}, ltp, nullptr, &traces);
  return std::move(traces[0]);
}

GenerateResult generate(const ModelParams& params, const TokenSeq& prompt,
                        int max_new, const TuningConfig* tuning) {
  if (max_new < 1) throw ConfigError("generate: max_new must be >= 1");
  if (prompt.empty()) throw DataError("generate: empty prompt");
  if (static_cast<int>(prompt.size()) >= params.config.seq_len_max)
    throw DataError("generate: prompt fills the context window");

  LayerTuning lt;
  const LayerTuning* ltp = nullptr;
  if (tuning && !tuning->empty()) {
    lt = split_by_layer(*tuning, params.config.n_layers,
                        params.config.n_routed_experts, params.config.top_k);
    ltp = &lt;
  }

  TokenSeq seq = prompt;
  for (int i = 0; i < max_new; ++i) {
    std::vector<ForwardTrace> traces;
    forward_batch(params, {seq}, ltp, nullptr, &traces);
    const MatX& logits = traces[0].logits;
    Eigen::Index next = 0;
    logits.row(logits.rows() - 1).maxCoeff(&next);
    seq.push_back(static_cast<TokenId>(next));
    if (next == 2 /* EOS */ ||
        static_cast<int>(seq.size()) >= params.config.seq_len_max)
      break;
  }

  // One final pass over the full sequence; causal attention makes the
  // per-position decisions identical to the incremental ones.
  std::vector<ForwardTrace> traces;
  forward_batch(params, {seq}, ltp, nullptr, &traces);
  GenerateResult res;
  res.tokens = seq;
  res.trace = std::move(traces[0]);
  for (std::size_t t = prompt.size(); t < seq.size(); ++t)
    res.trace.is_completion[t] = true;
  return res;
}

namespace {

constexpr char kCkptMagic[8] = {'M', 'O', 'T', 'E', 'C', 'K', 'P', '1'};

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& at) {
  if (at + sizeof(T) > buf.size())
    throw DataError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::string buf;
  buf.reserve(64 + params.flat.size() * sizeof(Real));
  buf.append(kCkptMagic, sizeof(kCkptMagic));
  const ModelConfig& c = params.config;
  put<std::int64_t>(buf, c.vocab_size);
  put<std::int64_t>(buf, c.seq_len_max);
  put<std::int64_t>(buf, c.d_model);
  put<std::int64_t>(buf, c.n_layers);
  put<std::int64_t>(buf, c.n_routed_experts);
  put<std::int64_t>(buf, c.n_shared_experts);
  put<std::int64_t>(buf, c.top_k);
  put<std::int64_t>(buf, c.d_expert_hidden);
  put<std::uint64_t>(buf, c.seed);
  put<std::int64_t>(buf, params.flat.size());
  buf.append(reinterpret_cast<const char*>(params.flat.data()),
             params.flat.size() * sizeof(Real));
  io::write_file_atomic(path, buf);
}

ModelParams load_checkpoint(const std::string& path) {
  const std::string buf = io::read_file(path);
  if (buf.size() < sizeof(kCkptMagic) ||
      std::memcmp(buf.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  std::size_t at = sizeof(kCkptMagic);
  ModelConfig c;
  c.vocab_size = static_cast<int>(take<std::int64_t>(buf, at));
  c.seq_len_max = static_cast<int>(take<std::int64_t>(buf, at));
  c.d_model = static_cast<int>(take<std::int64_t>(buf, at));
  c.n_layers = static_cast<int>(take<std::int64_t>(buf, at));
  c.n_routed_experts = static_cast<int>(take<std::int64_t>(buf, at));
  c.n_shared_experts = static_cast<int>(take<std::int64_t>(buf, at));
  c.top_k = static_cast<int>(take<std::int64_t>(buf, at));
  c.d_expert_hidden = static_cast<int>(take<std::int64_t>(buf, at));
  c.seed = take<std::uint64_t>(buf, at);
  c.validate();

  ModelParams p(c);
  const auto n = take<std::int64_t>(buf, at);
  if (n != p.layout.total)
    throw DataError("checkpoint: parameter count mismatch");
  if (at + static_cast<std::size_t>(n) * sizeof(Real) != buf.size())
    throw DataError("checkpoint: size mismatch");
  std::memcpy(p.flat.data(), buf.data() + at, n * sizeof(Real));
  if (!p.flat.allFinite())
    throw DataError("checkpoint: non-finite parameters");
  return p;
}

}  // namespace mote
