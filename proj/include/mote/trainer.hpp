#pragma once

#include "mote/dataset.hpp"
#include "mote/model.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace mote {

struct TrainConfig {
  int steps = 1500;
  int batch_size = 16;
  Real learning_rate = 3e-3;
  Real aux_balance_coeff = 0.02;
  std::uint64_t seed = 1;

  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;

  void validate() const;
};

/// Next-token training view of a labeled prompt: the model input is the
/// prompt plus all answer tokens but the last, and each answer token is a
/// target at the position right before it.
struct TrainExample {
  TokenSeq input;
  std::vector<std::pair<int, TokenId>> targets;  // (position, token)
};

TrainExample to_train_example(const LabeledPrompt& prompt);
std::vector<TrainExample> to_train_examples(
    const std::vector<LabeledPrompt>& prompts);

struct LossBreakdown {
  Real total = 0, ce = 0, aux = 0;
};

/// Forward + backward over one batch. `grad` is laid out like
/// ModelParams::flat. `load_counts` (L x E), when given, accumulates
/// routed-expert selection counts.
LossBreakdown loss_and_grad(const ModelParams& params,
                            const std::vector<TrainExample>& batch,
                            Real aux_coeff, VecX& grad,
                            MatX* load_counts = nullptr);

struct TrainReport {
  std::vector<Real> losses;  // per step, cross-entropy + aux
  Real final_train_accuracy = 0.0;
  std::optional<Real> final_heldout_accuracy;
  MatX load_fractions;        // L x E, selection mass over the final window
  int load_window_steps = 0;  // steps the window covers

  std::string losses_csv() const;
};

/// Adam over the flat parameter vector. Deterministic for a fixed seed;
/// steps == 0 returns the input parameters untouched.
std::pair<ModelParams, TrainReport> train(
    ModelParams model, const std::vector<LabeledPrompt>& data,
    const std::vector<LabeledPrompt>& heldout, const TrainConfig& config);

/// Teacher-forced accuracy of the first answer token.
Real answer_token_accuracy(const ModelParams& params,
                           const std::vector<TrainExample>& examples);

/// Generation accuracy against expected classes, with optional router
/// overrides. The quality-regression probe.
Real eval_quality(const ModelParams& params,
                  const std::vector<LabeledPrompt>& heldout,
                  const TuningConfig* tuning = nullptr);

}  // namespace mote
