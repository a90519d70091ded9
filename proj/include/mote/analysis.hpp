#pragma once

#include "mote/dataset.hpp"
#include "mote/ftri.hpp"
#include "mote/model.hpp"
#include "mote/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mote {

/// Counts of prompts moving from a baseline class (row) to a tuned class
/// (column). Unknown is a real row/column, never merged away.
struct TransitionMatrix {
  Eigen::Matrix<std::int64_t, kNumBehaviorClasses, kNumBehaviorClasses>
      counts = decltype(counts)::Zero();

  std::int64_t total() const { return counts.sum(); }
  std::int64_t row_sum(BehaviorClass c) const {
    return counts.row(static_cast<int>(c)).sum();
  }
  bool diagonal() const;
};

/// Fraction of prompts leaving class i, over prompts with a known class on
/// both sides. Rows without such prompts stay unset rather than zero.
using FlipRates = std::array<std::optional<Real>, kNumBehaviorClasses>;

FlipRates flip_rates(const TransitionMatrix& m);

struct ExperimentRun {
  TransitionMatrix matrix;
  FlipRates rates;
  std::int64_t unknown_baseline = 0;  // prompts Unknown at baseline
  std::int64_t unknown_tuned = 0;     // prompts Unknown after tuning
  std::vector<BehaviorClass> baseline_classes;  // per prompt
  std::vector<BehaviorClass> tuned_classes;
};

struct ControlRun {
  std::uint64_t seed = 0;
  TuningConfig tuning;
  ExperimentRun run;
};

struct ExperimentReport {
  std::string dataset_id;
  std::uint64_t model_seed = 0;
  TuningConfig tuning;  // echo of the distinctive-expert condition
  ExperimentRun tuned;
  std::vector<ControlRun> controls;
};

struct ExperimentOptions {
  int max_new = 2;
  std::string dataset_id = "dataset";
};

/// Baseline vs. tuned greedy generation over the prompt set, classified
/// and tallied into a transition matrix.
ExperimentReport run_experiment(const ModelParams& model,
                                const std::vector<LabeledPrompt>& prompts,
                                const TuningConfig& tuning,
                                const ExperimentOptions& opts = {});

/// run_experiment plus matched random-suppression controls, one per seed,
/// each sampling `control_size` experts disjoint from `exclude`.
ExperimentReport run_experiment_with_controls(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig& tuning, int control_size,
    const std::vector<std::uint64_t>& control_seeds,
    const std::vector<ExpertAddr>& exclude,
    const ExperimentOptions& opts = {});

/// Uniform sample of n expert addresses without replacement, disjoint
/// from `exclude`, deterministic per seed. The sampled experts are
/// suppressed.
TuningConfig random_control(int n, std::uint64_t seed,
                            const std::vector<ExpertAddr>& exclude,
                            int n_layers, int n_experts);

/// Identification pipeline: generate, classify by observed behavior,
/// aggregate activation maps, contrast the target class, rank experts.
struct IdentifyOptions {
  TraceScope scope = TraceScope::PromptOnly;
  Aggregation aggregation = Aggregation::Count;
  bool normalize_by_tokens = true;
  int max_new = 2;
};

struct RecordedPrompt {
  int prompt_id = 0;
  BehaviorClass observed = BehaviorClass::Unknown;
  BehaviorClass expected = BehaviorClass::Unknown;
  MatX map;
};

std::vector<RecordedPrompt> record_activity(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig* tuning = nullptr, const IdentifyOptions& opts = {});

std::vector<ScoredExpert> identify_distinctive(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    BehaviorClass target, int top_n, const IdentifyOptions& opts = {});

/// Out-of-template check: the caller identifies experts on the fit split
/// only; this evaluates the given tuning on the held-out prompts alone.
ExperimentReport heldout_generalization(
    const ModelParams& model, const PromptTemplate& full_template,
    Real heldout_fraction, std::uint64_t split_seed,
    const TuningConfig& tuning, const ExperimentOptions& opts = {});

/// The second-behavior replication: language dataset, language classes,
/// plus unrelated-expert controls.
ExperimentReport language_experiment(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig& tuning, int control_size,
    const std::vector<std::uint64_t>& control_seeds,
    const ExperimentOptions& opts = {});

/// Deterministic JSON rendering of a report (schema documented in the
/// README).
std::string report_to_json(const ExperimentReport& report);

/// Plain-text transition table for stdout.
std::string report_table(const ExperimentReport& report);

}  // namespace mote
