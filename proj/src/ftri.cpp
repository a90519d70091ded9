#include "mote/ftri.hpp"

#include <algorithm>

namespace mote {

int tokens_in_scope(const ForwardTrace& trace, TraceScope scope) {
  if (scope == TraceScope::Full)
    return static_cast<int>(trace.tokens.size());
  int n = 0;
  for (bool c : trace.is_completion)
    if (!c) ++n;
  return n;
}

MatX prompt_activation_map(const ForwardTrace& trace, int n_layers,
                           int n_experts, TraceScope scope, Aggregation agg) {
  if (trace.tokens.empty())
    throw DataError("prompt_activation_map: empty trace");
  MatX map = MatX::Zero(n_layers, n_experts);
  for (std::size_t t = 0; t < trace.decisions.size(); ++t) {
    if (scope == TraceScope::PromptOnly && trace.is_completion[t]) continue;
    for (const auto& dec : trace.decisions[t]) {
      for (const auto& e : dec.entries) {
        if (dec.layer_id >= n_layers || e.expert_id >= n_experts)
          throw DataError("prompt_activation_map: trace exceeds model bounds");
        map(dec.layer_id, e.expert_id) +=
            agg == Aggregation::Count ? 1.0 : e.weight;
      }
    }
  }
  return map;
}

MatX class_average_map(const std::vector<MatX>& maps,
                       const std::vector<BehaviorClass>& labels,
                       BehaviorClass target) {
  if (maps.size() != labels.size())
    throw ConfigError("class_average_map: maps and labels differ in length");
  MatX sum;
  int n = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (labels[i] != target) continue;
    if (n == 0)
      sum = maps[i];
    else
      sum += maps[i];
    ++n;
  }
  if (n == 0)
    throw DataError(std::string("class_average_map: no maps labeled ") +
                    to_string(target));
  return sum / n;
}

MatX differential_map(const std::vector<MatX>& maps,
                      const std::vector<BehaviorClass>& labels,
                      BehaviorClass target) {
  if (maps.size() != labels.size())
    throw ConfigError("differential_map: maps and labels differ in length");
  MatX target_sum, other_sum;
  int n_target = 0, n_other = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (labels[i] == BehaviorClass::Unknown) continue;
    if (labels[i] == target) {
      if (n_target == 0)
        target_sum = maps[i];
      else
        target_sum += maps[i];
      ++n_target;
    } else {
      if (n_other == 0)
        other_sum = maps[i];
      else
        other_sum += maps[i];
      ++n_other;
    }
  }
  if (n_target == 0)
    throw DataError(std::string("differential_map: no maps labeled ") +
                    to_string(target));
  if (n_other == 0)
    throw DataError("differential_map: no maps outside the target class");
  return target_sum / n_target - other_sum / n_other;
}

std::vector<ScoredExpert> top_distinctive(const MatX& map, int n) {
  const int total = static_cast<int>(map.rows() * map.cols());
  if (n < 0 || n > total)
    throw ConfigError("top_distinctive: n must be in [0, layers*experts]");
  std::vector<ScoredExpert> all;
  all.reserve(total);
  for (int l = 0; l < map.rows(); ++l)
    for (int e = 0; e < map.cols(); ++e)
      all.push_back({{l, e}, map(l, e)});
  std::sort(all.begin(), all.end(),
            [](const ScoredExpert& a, const ScoredExpert& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.addr < b.addr;
            });
  all.resize(n);
  return all;
}

}  // namespace mote
