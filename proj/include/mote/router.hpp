#pragma once

#include "mote/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mote {

/// Softmax over raw router scores. Free function so tests and the model
/// share one definition.
VecX softmax(const VecXRef& scores);

/// Top-k gate: softmax over all scores, keep the k highest (ties broken
/// toward the lower expert id), renormalize the kept weights to sum 1.
GateDecision route(const VecXRef& scores, int k, int layer_id = 0);

/// Remove the listed experts from the decision and renormalize what is
/// left. No replacement experts are drafted; suppressing every entry
/// yields an empty decision (shared expert only).
GateDecision apply_suppression(const GateDecision& decision,
                               const std::vector<int>& suppressed_in_layer);

/// Force the listed experts into the decision. For each missing one the
/// lowest-weight non-stimulated entry is evicted (only while the decision
/// is at capacity k; eviction ties drop the higher expert id). All
/// stimulated experts are then set to the maximum weight among the
/// surviving entries, computed once, and the result is renormalized.
GateDecision apply_stimulation(const GateDecision& decision,
                               const std::vector<int>& stimulated_in_layer,
                               int top_k);

/// Per-layer view of a TuningConfig, precomputed once per forward call.
struct LayerTuning {
  std::vector<std::vector<int>> suppressed;  // [layer] -> expert ids
  std::vector<std::vector<int>> stimulated;

  bool empty() const;
};

/// Splits a TuningConfig by layer and checks its invariants against the
/// model bounds: indices in range, suppressed/stimulated disjoint, and at
/// most top_k stimulated experts per layer.
LayerTuning split_by_layer(const TuningConfig& tuning, int n_layers,
                           int n_experts, int top_k);

// ---------------------------------------------------------------------------
// Expert tuple files.
//
// Text format: optional '#' comment lines, then a bracketed list of
// (layer-id, expert-id) pairs. Bare "(l, e)" pairs one per line are also
// accepted. Bounds are checked at use, not at parse, so coordinate lists
// from larger models still parse.

std::vector<ExpertAddr> parse_expert_tuples(const std::string& text);
std::vector<ExpertAddr> load_expert_tuples(const std::string& path);

/// Canonical form: one line, "[(l, e), (l, e), ...]" plus trailing newline.
std::string format_expert_tuples(const std::vector<ExpertAddr>& experts);
void save_expert_tuples(const std::vector<ExpertAddr>& experts,
                        const std::string& path);

}  // namespace mote
