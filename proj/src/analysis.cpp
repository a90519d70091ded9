#include "mote/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace mote {

using nlohmann::ordered_json;

bool TransitionMatrix::diagonal() const {
  for (int i = 0; i < kNumBehaviorClasses; ++i)
    for (int j = 0; j < kNumBehaviorClasses; ++j)
      if (i != j && counts(i, j) != 0) return false;
  return true;
}

FlipRates flip_rates(const TransitionMatrix& m) {
  FlipRates rates;
  const int unknown = static_cast<int>(BehaviorClass::Unknown);
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    if (i == unknown) continue;
    std::int64_t row = 0;
    for (int j = 0; j < kNumBehaviorClasses; ++j)
      if (j != unknown) row += m.counts(i, j);
    if (row == 0) continue;  // undefined, stays unset
    rates[i] = 1.0 - static_cast<Real>(m.counts(i, i)) / row;
  }
  return rates;
}

namespace {

BehaviorClass classify_generation(const GenerateResult& res,
                                  std::size_t prompt_len) {
  TokenSeq completion(res.tokens.begin() + prompt_len, res.tokens.end());
  if (completion.empty()) return BehaviorClass::Unknown;
  return classify_response(completion);
}

ExperimentRun run_condition(const ModelParams& model,
                            const std::vector<LabeledPrompt>& prompts,
                            const TuningConfig& tuning, int max_new) {
  if (prompts.empty()) throw DataError("run_experiment: empty prompt set");
  ExperimentRun run;
  run.baseline_classes.reserve(prompts.size());
  run.tuned_classes.reserve(prompts.size());
  const TuningConfig* tuned = tuning.empty() ? nullptr : &tuning;
  for (const auto& p : prompts) {
    GenerateResult base = generate(model, p.tokens, max_new, nullptr);
    GenerateResult mod = generate(model, p.tokens, max_new, tuned);
    const BehaviorClass cb = classify_generation(base, p.tokens.size());
    const BehaviorClass ct = classify_generation(mod, p.tokens.size());
    run.baseline_classes.push_back(cb);
    run.tuned_classes.push_back(ct);
    run.matrix.counts(static_cast<int>(cb), static_cast<int>(ct)) += 1;
    if (cb == BehaviorClass::Unknown) ++run.unknown_baseline;
    if (ct == BehaviorClass::Unknown) ++run.unknown_tuned;
  }
  run.rates = flip_rates(run.matrix);
  return run;
}

}  // namespace

ExperimentReport run_experiment(const ModelParams& model,
                                const std::vector<LabeledPrompt>& prompts,
                                const TuningConfig& tuning,
                                const ExperimentOptions& opts) {
  ExperimentReport report;
  report.dataset_id = opts.dataset_id;
  report.model_seed = model.config.seed;
  report.tuning = tuning;
  report.tuned = run_condition(model, prompts, tuning, opts.max_new);
  return report;
}

ExperimentReport run_experiment_with_controls(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig& tuning, int control_size,
    const std::vector<std::uint64_t>& control_seeds,
    const std::vector<ExpertAddr>& exclude, const ExperimentOptions& opts) {
  ExperimentReport report = run_experiment(model, prompts, tuning, opts);
  for (std::uint64_t seed : control_seeds) {
    ControlRun ctl;
    ctl.seed = seed;
    ctl.tuning = random_control(control_size, seed, exclude,
                                model.config.n_layers,
                                model.config.n_routed_experts);
    ctl.run = run_condition(model, prompts, ctl.tuning, opts.max_new);
    report.controls.push_back(std::move(ctl));
  }
  return report;
}

TuningConfig random_control(int n, std::uint64_t seed,
                            const std::vector<ExpertAddr>& exclude,
                            int n_layers, int n_experts) {
  if (n < 0) throw ConfigError("random_control: n must be >= 0");
  std::vector<ExpertAddr> pool;
  pool.reserve(static_cast<std::size_t>(n_layers) * n_experts);
  for (int l = 0; l < n_layers; ++l)
    for (int e = 0; e < n_experts; ++e) {
      ExpertAddr a{l, e};
      if (std::find(exclude.begin(), exclude.end(), a) == exclude.end())
        pool.push_back(a);
    }
  if (n > static_cast<int>(pool.size())) {
    std::ostringstream os;
    os << "random_control: cannot draw " << n << " experts from a pool of "
       << pool.size();
    throw ConfigError(os.str());
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  TuningConfig t;
  t.suppressed = std::move(pool);
  return t;
}

std::vector<RecordedPrompt> record_activity(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig* tuning, const IdentifyOptions& opts) {
  if (prompts.empty()) throw DataError("record_activity: empty prompt set");
  std::vector<RecordedPrompt> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    GenerateResult res = generate(model, p.tokens, opts.max_new, tuning);
    RecordedPrompt rec;
    rec.prompt_id = p.prompt_id;
    rec.expected = p.expected;
    rec.observed = classify_generation(res, p.tokens.size());
    rec.map = prompt_activation_map(res.trace, model.config.n_layers,
                                    model.config.n_routed_experts, opts.scope,
                                    opts.aggregation);
    if (opts.normalize_by_tokens) {
      const int n_tokens = tokens_in_scope(res.trace, opts.scope);
      if (n_tokens > 0) rec.map /= static_cast<Real>(n_tokens);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ScoredExpert> identify_distinctive(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    BehaviorClass target, int top_n, const IdentifyOptions& opts) {
  const auto recorded = record_activity(model, prompts, nullptr, opts);
  std::vector<MatX> maps;
  std::vector<BehaviorClass> labels;
  maps.reserve(recorded.size());
  labels.reserve(recorded.size());
  for (const auto& r : recorded) {
    maps.push_back(r.map);
    labels.push_back(r.observed);
  }
  return top_distinctive(differential_map(maps, labels, target), top_n);
}

ExperimentReport heldout_generalization(
    const ModelParams& model, const PromptTemplate& full_template,
    Real heldout_fraction, std::uint64_t split_seed,
    const TuningConfig& tuning, const ExperimentOptions& opts) {
  if (heldout_fraction <= 0.0)
    throw ConfigError("heldout_generalization: empty evaluation set");
  const auto prompts = generate_dataset(full_template);
  TemplateSplit split = split_prompts(prompts, heldout_fraction, split_seed);
  ExperimentOptions heldout_opts = opts;
  heldout_opts.dataset_id = opts.dataset_id + ":heldout";
  return run_experiment(model, split.heldout, tuning, heldout_opts);
}

ExperimentReport language_experiment(
    const ModelParams& model, const std::vector<LabeledPrompt>& prompts,
    const TuningConfig& tuning, int control_size,
    const std::vector<std::uint64_t>& control_seeds,
    const ExperimentOptions& opts) {
  for (const auto& p : prompts)
    if (p.expected != BehaviorClass::LangA &&
        p.expected != BehaviorClass::LangB)
      throw DataError("language_experiment: non-language prompt in dataset");
  std::vector<ExpertAddr> exclude = tuning.suppressed;
  exclude.insert(exclude.end(), tuning.stimulated.begin(),
                 tuning.stimulated.end());
  ExperimentOptions lang_opts = opts;
  if (lang_opts.dataset_id == "dataset") lang_opts.dataset_id = "language";
  return run_experiment_with_controls(model, prompts, tuning, control_size,
                                      control_seeds, exclude, lang_opts);
}

namespace {

ordered_json tuning_to_json(const TuningConfig& t) {
  ordered_json j;
  auto addrs = [](const std::vector<ExpertAddr>& xs) {
    ordered_json arr = ordered_json::array();
    for (const auto& a : xs)
      arr.push_back(ordered_json::array({a.layer_id, a.expert_id}));
    return arr;
  };
  j["suppressed"] = addrs(t.suppressed);
  j["stimulated"] = addrs(t.stimulated);
  return j;
}

ordered_json run_to_json(const ExperimentRun& run) {
  ordered_json j;
  ordered_json matrix = ordered_json::array();
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < kNumBehaviorClasses; ++c)
      row.push_back(run.matrix.counts(i, c));
    matrix.push_back(row);
  }
  j["class_order"] = ordered_json::array();
  for (int i = 0; i < kNumBehaviorClasses; ++i)
    j["class_order"].push_back(to_string(static_cast<BehaviorClass>(i)));
  j["transition_matrix"] = matrix;
  ordered_json rates;
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    if (i == static_cast<int>(BehaviorClass::Unknown)) continue;
    const auto& r = run.rates[i];
    rates[to_string(static_cast<BehaviorClass>(i))] =
        r ? ordered_json(*r) : ordered_json(nullptr);
  }
  j["flip_rates"] = rates;
  j["unknown_baseline"] = run.unknown_baseline;
  j["unknown_tuned"] = run.unknown_tuned;
  j["total_prompts"] = run.matrix.total();
  return j;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["dataset_id"] = report.dataset_id;
  j["model_seed"] = report.model_seed;
  j["tuning"] = tuning_to_json(report.tuning);
  j["tuned"] = run_to_json(report.tuned);
  j["controls"] = ordered_json::array();
  for (const auto& c : report.controls) {
    ordered_json jc;
    jc["seed"] = c.seed;
    jc["tuning"] = tuning_to_json(c.tuning);
    jc["run"] = run_to_json(c.run);
    j["controls"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

std::string report_table(const ExperimentReport& report) {
  std::ostringstream os;
  os << "dataset: " << report.dataset_id << "\n";
  os << "baseline \\ tuned";
  for (int c = 0; c < kNumBehaviorClasses; ++c)
    os << "\t" << to_string(static_cast<BehaviorClass>(c));
  os << "\n";
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    os << to_string(static_cast<BehaviorClass>(i));
    for (int c = 0; c < kNumBehaviorClasses; ++c)
      os << "\t" << report.tuned.matrix.counts(i, c);
    os << "\n";
  }
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    if (i == static_cast<int>(BehaviorClass::Unknown)) continue;
    os << "flip(" << to_string(static_cast<BehaviorClass>(i)) << ") = ";
    if (report.tuned.rates[i])
      os << *report.tuned.rates[i];
    else
      os << "undefined";
    os << "\n";
  }
  if (!report.controls.empty()) {
    os << "controls: " << report.controls.size() << " random runs\n";
  }
  return os.str();
}

}  // namespace mote
