#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mote {

using Real = double;
using Index = std::int64_t;

using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using ArrX = Eigen::Array<Real, Eigen::Dynamic, 1>;
using MatXRef = Eigen::Ref<const MatX>;
using VecXRef = Eigen::Ref<const VecX>;

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

// Error taxonomy maps onto the CLI exit codes: usage/config -> 1,
// data -> 2, numeric -> 3.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One routed expert, addressed as (layer, expert) within its layer's
/// routed-expert table.
struct ExpertAddr {
  int layer_id = 0;
  int expert_id = 0;

  friend bool operator==(const ExpertAddr& a, const ExpertAddr& b) {
    return a.layer_id == b.layer_id && a.expert_id == b.expert_id;
  }
  friend bool operator<(const ExpertAddr& a, const ExpertAddr& b) {
    if (a.layer_id != b.layer_id) return a.layer_id < b.layer_id;
    return a.expert_id < b.expert_id;
  }
};

struct GateEntry {
  int expert_id = 0;
  Real weight = 0.0;
};

/// Per-token, per-layer routing outcome: the selected routed experts and
/// their normalized mixture weights. Suppression may leave fewer than k
/// entries (or none, in which case only the shared expert contributes).
struct GateDecision {
  int layer_id = 0;
  std::vector<GateEntry> entries;

  Real weight_sum() const {
    Real s = 0.0;
    for (const auto& e : entries) s += e.weight;
    return s;
  }
  bool contains(int expert_id) const {
    for (const auto& e : entries)
      if (e.expert_id == expert_id) return true;
    return false;
  }
};

/// Inference-time router override: experts to force out (suppress) and
/// experts to force in (stimulate). Sets must be disjoint.
struct TuningConfig {
  std::vector<ExpertAddr> suppressed;
  std::vector<ExpertAddr> stimulated;

  bool empty() const { return suppressed.empty() && stimulated.empty(); }
};

enum class BehaviorClass : int {
  Refused = 0,
  Aligned = 1,
  Reasoned = 2,
  LangA = 3,
  LangB = 4,
  Unknown = 5,
};

inline constexpr int kNumBehaviorClasses = 6;  // incl. Unknown

inline const char* to_string(BehaviorClass c) {
  switch (c) {
    case BehaviorClass::Refused: return "0-REFUSED";
    case BehaviorClass::Aligned: return "1-ALIGNED";
    case BehaviorClass::Reasoned: return "2-REASONED";
    case BehaviorClass::LangA: return "LANG_A";
    case BehaviorClass::LangB: return "LANG_B";
    case BehaviorClass::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

BehaviorClass behavior_class_from_string(const std::string& name);

}  // namespace mote
