#include "mote/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace mote {

namespace {

constexpr Real kRmsEps = 1e-5;

/// dL/dx and dL/dgain for y = (x * rstd) .* gain, rstd = 1/rms(x).
void rmsnorm_backward(const MatX& x, const VecX& rstd,
                      const Eigen::Map<const MatX>& gain, const MatX& dy,
                      MatX& dx, Eigen::Map<MatX> dgain) {
  const Real d = static_cast<Real>(x.cols());
  // dgain: sum over rows of dy .* (x * rstd)
  dgain.col(0) += (dy.array() * (x.array().colwise() * rstd.array()))
                      .colwise()
                      .sum()
                      .transpose()
                      .matrix();
  MatX u = dy.array().rowwise() * gain.col(0).transpose().array();
  VecX dot = (x.array() * u.array()).rowwise().sum().matrix();
  dx = (u.array().colwise() * rstd.array()) -
       (x.array().colwise() * (dot.array() * rstd.array().cube() / d));
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (aux_balance_coeff < 0)
    throw ConfigError("train: aux_balance_coeff must be >= 0");
}

TrainExample to_train_example(const LabeledPrompt& prompt) {
  if (prompt.answer.empty())
    throw DataError("train example: prompt has no answer tokens");
  TrainExample ex;
  ex.input = prompt.tokens;
  ex.input.insert(ex.input.end(), prompt.answer.begin(),
                  prompt.answer.end() - 1);
  const int p = static_cast<int>(prompt.tokens.size());
  for (std::size_t i = 0; i < prompt.answer.size(); ++i)
    ex.targets.push_back({p - 1 + static_cast<int>(i), prompt.answer[i]});
  return ex;
}

std::vector<TrainExample> to_train_examples(
    const std::vector<LabeledPrompt>& prompts) {
  std::vector<TrainExample> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(to_train_example(p));
  return out;
}

LossBreakdown loss_and_grad(const ModelParams& params,
                            const std::vector<TrainExample>& batch,
                            Real aux_coeff, VecX& grad, MatX* load_counts) {
  const ModelConfig& c = params.config;
  const int d = c.d_model;
  const int E = c.n_routed_experts;
  const int k = c.top_k;
  const int h = c.d_expert_hidden;
  const int L = c.n_layers;
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw DataError("loss_and_grad: empty batch");

  std::vector<TokenSeq> seqs;
  seqs.reserve(B);
  for (const auto& ex : batch) seqs.push_back(ex.input);

  ForwardCache cache;
  forward_batch(params, seqs, nullptr, &cache, nullptr);
  const auto& off = cache.seq_offsets;
  const int N = off[B];

  grad.setZero(params.layout.total);
  ModelParams g(c);  // reuse the layout accessors for gradient views
  g.flat.swap(grad);

  // cross-entropy at the target positions
  int n_targets = 0;
  for (const auto& ex : batch) n_targets += static_cast<int>(ex.targets.size());
  if (n_targets == 0) throw DataError("loss_and_grad: batch has no targets");

  LossBreakdown loss;
  MatX dlogits = MatX::Zero(N, c.vocab_size);
  for (int b = 0; b < B; ++b) {
    for (const auto& [pos, tok] : batch[b].targets) {
      if (pos < 0 || pos >= off[b + 1] - off[b])
        throw DataError("loss_and_grad: target position out of range");
      const int row = off[b] + pos;
      VecX logit_row = cache.logits.row(row).transpose();
      VecX p = softmax(logit_row);
      loss.ce -= std::log(std::max(p[tok], 1e-300));
      dlogits.row(row) = p.transpose() / n_targets;
      dlogits(row, tok) -= 1.0 / n_targets;
    }
  }
  loss.ce /= n_targets;

  // output head + final norm
  g.w_out() += cache.lnf_out.transpose() * dlogits;
  MatX dx(N, d);
  {
    MatX dlnf = dlogits * params.w_out().transpose();
    rmsnorm_backward(cache.x_final, cache.rstd_f, params.final_ln_gain(),
                     dlnf, dx, g.final_ln_gain());
  }

  const Real attn_scale = 1.0 / std::sqrt(static_cast<Real>(d));

  for (int l = L - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];

    // ---- MoE block: x = x_mid + moe(ln2(x_mid))
    MatX dln2 = MatX::Zero(N, d);
    MatX dgate = MatX::Zero(N, k);  // dL/d(entry weight)

    {  // shared expert
      MatX z = nn::silu(lc.shared_pre);
      g.shared_w2(l) += z.transpose() * dx;
      MatX dz = dx * params.shared_w2(l).transpose();
      MatX da = dz.array() * nn::silu_grad(lc.shared_pre).array();
      g.shared_w1(l) += lc.ln2_out.transpose() * da;
      dln2 += da * params.shared_w1(l).transpose();
    }

    {  // routed experts, grouped as in the forward pass
      std::vector<std::vector<std::pair<int, int>>> groups(E);
      for (int n = 0; n < N; ++n) {
        const auto& entries = lc.decisions[n].entries;
        for (int s = 0; s < static_cast<int>(entries.size()); ++s)
          groups[entries[s].expert_id].push_back({n, s});
        if (load_counts)
          for (const auto& e : entries)
            (*load_counts)(l, e.expert_id) += 1.0;
      }
      for (int e = 0; e < E; ++e) {
        const auto& grp = groups[e];
        if (grp.empty()) continue;
        const int G = static_cast<int>(grp.size());
        MatX xg(G, d), ag(G, h), dyg(G, d);
        for (int i = 0; i < G; ++i) {
          const auto [n, s] = grp[i];
          xg.row(i) = lc.ln2_out.row(n);
          ag.row(i) = lc.expert_pre.block(n, s * h, 1, h);
          dyg.row(i) = lc.decisions[n].entries[s].weight * dx.row(n);
        }
        MatX zg = nn::silu(ag);
        MatX yg = zg * params.expert_w2(l, e);
        g.expert_w2(l, e) += zg.transpose() * dyg;
        MatX dzg = dyg * params.expert_w2(l, e).transpose();
        MatX dag = dzg.array() * nn::silu_grad(ag).array();
        g.expert_w1(l, e) += xg.transpose() * dag;
        for (int i = 0; i < G; ++i) {
          const auto [n, s] = grp[i];
          dln2.row(n) += dag.row(i) * params.expert_w1(l, e).transpose();
          dgate(n, s) = dx.row(n).dot(yg.row(i));
        }
      }
    }

    // ---- gate weights -> router probabilities -> router logits
    MatX dprobs = MatX::Zero(N, E);
    for (int n = 0; n < N; ++n) {
      const auto& entries = lc.decisions[n].entries;
      Real sel_sum = 0.0, dot = 0.0;
      for (int s = 0; s < static_cast<int>(entries.size()); ++s) {
        sel_sum += lc.router_probs(n, entries[s].expert_id);
        dot += dgate(n, s) * entries[s].weight;
      }
      for (int s = 0; s < static_cast<int>(entries.size()); ++s)
        dprobs(n, entries[s].expert_id) = (dgate(n, s) - dot) / sel_sum;
    }

    if (aux_coeff > 0) {
      // load-balance penalty: E * sum_e (mean_prob_e - 1/E)^2, averaged
      // over layers
      Eigen::RowVectorXd pbar = lc.router_probs.colwise().mean();
      Eigen::RowVectorXd dev = pbar.array() - 1.0 / E;
      loss.aux += E * dev.squaredNorm() / L;
      dprobs.rowwise() +=
          (aux_coeff / L) * E * 2.0 / N * dev;
    }

    MatX drlogits(N, E);
    for (int n = 0; n < N; ++n) {
      const auto p = lc.router_probs.row(n);
      const Real dot = dprobs.row(n).dot(p);
      drlogits.row(n) = p.array() * (dprobs.row(n).array() - dot);
    }
    g.wr(l) += lc.ln2_out.transpose() * drlogits;
    dln2 += drlogits * params.wr(l).transpose();

    MatX dx_mid(N, d);
    rmsnorm_backward(lc.x_mid, lc.rstd2, params.ln2_gain(l), dln2, dx_mid,
                     g.ln2_gain(l));
    dx_mid += dx;  // residual

    // ---- attention block: x_mid = x_in + attn(ln1(x_in)) * Wo
    g.wo(l) += lc.attn_ctx.transpose() * dx_mid;
    MatX dctx = dx_mid * params.wo(l).transpose();
    MatX dq = MatX::Zero(N, d), dk = MatX::Zero(N, d), dv = MatX::Zero(N, d);
    for (int b = 0; b < B; ++b) {
      const int o = off[b];
      const int T = off[b + 1] - o;
      const MatX& P = lc.attn_probs[b];
      MatX dP = dctx.middleRows(o, T) * lc.v.middleRows(o, T).transpose();
      dv.middleRows(o, T) += P.transpose() * dctx.middleRows(o, T);
      MatX dS = MatX::Zero(T, T);
      for (int i = 0; i < T; ++i) {
        auto p_row = P.row(i).head(i + 1);
        auto dp_row = dP.row(i).head(i + 1);
        const Real dot = dp_row.dot(p_row);
        dS.row(i).head(i + 1) =
            (p_row.array() * (dp_row.array() - dot)).matrix();
      }
      dq.middleRows(o, T) += dS * lc.k.middleRows(o, T) * attn_scale;
      dk.middleRows(o, T) +=
          dS.transpose() * lc.q.middleRows(o, T) * attn_scale;
    }
    g.wq(l) += lc.ln1_out.transpose() * dq;
    g.wk(l) += lc.ln1_out.transpose() * dk;
    g.wv(l) += lc.ln1_out.transpose() * dv;
    MatX dln1 = dq * params.wq(l).transpose() +
                dk * params.wk(l).transpose() +
                dv * params.wv(l).transpose();
    MatX dx_in(N, d);
    rmsnorm_backward(lc.x_in, lc.rstd1, params.ln1_gain(l), dln1, dx_in,
                     g.ln1_gain(l));
    dx = dx_mid + dx_in;
  }

  // embeddings
  {
    auto dtok = g.tok_emb();
    auto dpos = g.pos_emb();
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < static_cast<int>(seqs[b].size()); ++t) {
        dtok.row(seqs[b][t]) += dx.row(off[b] + t);
        dpos.row(t) += dx.row(off[b] + t);
      }
  }

  loss.total = loss.ce + aux_coeff * loss.aux;
  g.flat.swap(grad);
  return loss;
}

std::string TrainReport::losses_csv() const {
  std::ostringstream os;
  os << "step,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i)
    os << i << "," << losses[i] << "\n";
  return os.str();
}

std::pair<ModelParams, TrainReport> train(
    ModelParams model, const std::vector<LabeledPrompt>& data,
    const std::vector<LabeledPrompt>& heldout, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw DataError("train: empty dataset");

  const auto examples = to_train_examples(data);
  const auto heldout_examples = to_train_examples(heldout);
  const int n = static_cast<int>(examples.size());
  const ModelConfig& c = model.config;

  TrainReport report;
  report.losses.reserve(config.steps);
  report.load_window_steps = std::min(100, config.steps);
  MatX load_counts = MatX::Zero(c.n_layers, c.n_routed_experts);

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  VecX grad(model.layout.total);
  VecX m = VecX::Zero(model.layout.total);
  VecX v = VecX::Zero(model.layout.total);

  const int window_start = config.steps - report.load_window_steps;
  for (int step = 0; step < config.steps; ++step) {
    std::vector<TrainExample> batch;
    batch.reserve(config.batch_size);
    for (int i = 0; i < config.batch_size; ++i)
      batch.push_back(examples[pick(rng)]);

    MatX* counts = step >= window_start ? &load_counts : nullptr;
    LossBreakdown loss = loss_and_grad(model, batch, config.aux_balance_coeff,
                                       grad, counts);
    if (!std::isfinite(loss.total)) {
      std::ostringstream os;
      os << "training diverged at step " << step
         << " (non-finite loss); lower the learning rate";
      throw NumericError(os.str());
    }
    report.losses.push_back(loss.total);

    const Real t = static_cast<Real>(step + 1);
    const Real bc1 = 1.0 - std::pow(config.adam_beta1, t);
    const Real bc2 = 1.0 - std::pow(config.adam_beta2, t);
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * grad;
    v.array() = config.adam_beta2 * v.array() +
                (1.0 - config.adam_beta2) * grad.array().square();
    model.flat.array() -= config.learning_rate * (m.array() / bc1) /
                          ((v.array() / bc2).sqrt() + config.adam_eps);
    if (!model.flat.allFinite())
      throw NumericError("training produced non-finite parameters");
  }

  if (config.steps > 0) {
    const Real total = load_counts.sum();
    report.load_fractions =
        total > 0 ? MatX(load_counts / total) : load_counts;
  } else {
    report.load_fractions = load_counts;
  }
  report.final_train_accuracy = answer_token_accuracy(model, examples);
  if (!heldout_examples.empty())
    report.final_heldout_accuracy =
        answer_token_accuracy(model, heldout_examples);
  return {std::move(model), std::move(report)};
}

Real answer_token_accuracy(const ModelParams& params,
                           const std::vector<TrainExample>& examples) {
  if (examples.empty()) throw DataError("accuracy: empty example set");
  const int chunk = 128;
  int correct = 0;
  for (std::size_t begin = 0; begin < examples.size(); begin += chunk) {
    const std::size_t end = std::min(examples.size(), begin + chunk);
    std::vector<TokenSeq> seqs;
    for (std::size_t i = begin; i < end; ++i) seqs.push_back(examples[i].input);
    std::vector<ForwardTrace> traces;
    forward_batch(params, seqs, nullptr, nullptr, &traces);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& [pos, tok] = examples[i].targets.front();
      Eigen::Index arg = 0;
      traces[i - begin].logits.row(pos).maxCoeff(&arg);
      if (static_cast<TokenId>(arg) == tok) ++correct;
    }
  }
  return static_cast<Real>(correct) / examples.size();
}

Real eval_quality(const ModelParams& params,
                  const std::vector<LabeledPrompt>& heldout,
                  const TuningConfig* tuning) {
  if (heldout.empty()) throw DataError("eval_quality: empty held-out set");
  int correct = 0;
  for (const auto& p : heldout) {
    GenerateResult res = generate(params, p.tokens, 1, tuning);
    const BehaviorClass observed =
        classify_response({res.tokens.back()});
    if (observed == p.expected) ++correct;
  }
  return static_cast<Real>(correct) / heldout.size();
}

}  // namespace mote
