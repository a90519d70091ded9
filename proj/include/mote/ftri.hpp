#pragma once

#include "mote/model.hpp"
#include "mote/types.hpp"

#include <vector>

namespace mote {

/// Which tokens of a trace feed the activation map.
enum class TraceScope { PromptOnly, Full };

/// Count selections per (layer, expert), or sum their gate weights.
enum class Aggregation { Count, Weight };

/// Layers x experts matrix of expert selections aggregated over the
/// tokens in scope. With Count aggregation and no router overrides every
/// row sums to top_k times the number of aggregated tokens.
MatX prompt_activation_map(const ForwardTrace& trace, int n_layers,
                           int n_experts,
                           TraceScope scope = TraceScope::PromptOnly,
                           Aggregation agg = Aggregation::Count);

/// Tokens that fall inside the scope (the map's normalization divisor).
int tokens_in_scope(const ForwardTrace& trace, TraceScope scope);

/// Entrywise mean over the maps whose label equals `target`.
MatX class_average_map(const std::vector<MatX>& maps,
                       const std::vector<BehaviorClass>& labels,
                       BehaviorClass target);

/// Resonance map: class average of `target` minus the average over all
/// other labeled maps. Unknown-labeled maps are ignored on both sides.
MatX differential_map(const std::vector<MatX>& maps,
                      const std::vector<BehaviorClass>& labels,
                      BehaviorClass target);

struct ScoredExpert {
  ExpertAddr addr;
  Real score = 0.0;
};

/// The n largest map entries, scores non-increasing, ties resolved toward
/// the lower (layer_id, expert_id).
std::vector<ScoredExpert> top_distinctive(const MatX& map, int n);

inline std::vector<ExpertAddr> addresses(const std::vector<ScoredExpert>& xs) {
  std::vector<ExpertAddr> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.addr);
  return out;
}

}  // namespace mote
