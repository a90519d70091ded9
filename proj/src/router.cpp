#include "mote/router.hpp"

#include "mote/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mote {

VecX softmax(const VecXRef& scores) {
  if (scores.size() == 0) throw NumericError("softmax: empty score vector");
  if (!scores.allFinite()) throw NumericError("softmax: non-finite score");
  const Real m = scores.maxCoeff();
  VecX p = (scores.array() - m).exp();
  p /= p.sum();
  return p;
}

GateDecision route(const VecXRef& scores, int k, int layer_id) {
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n)
    throw ConfigError("route: top_k must be in [1, n_experts]");
  if (!scores.allFinite()) throw NumericError("route: non-finite score");

  VecX probs = softmax(scores);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Highest score first; equal scores keep the lower expert id.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  GateDecision d;
  d.layer_id = layer_id;
  d.entries.reserve(k);
  Real sum = 0.0;
  for (int i = 0; i < k; ++i) {
    d.entries.push_back({order[i], probs[order[i]]});
    sum += probs[order[i]];
  }
  for (auto& e : d.entries) e.weight /= sum;
  return d;
}

GateDecision apply_suppression(const GateDecision& decision,
                               const std::vector<int>& suppressed_in_layer) {
  if (suppressed_in_layer.empty()) return decision;

  GateDecision out;
  out.layer_id = decision.layer_id;
  Real sum = 0.0;
  for (const auto& e : decision.entries) {
    if (std::find(suppressed_in_layer.begin(), suppressed_in_layer.end(),
                  e.expert_id) != suppressed_in_layer.end())
      continue;
    out.entries.push_back(e);
    sum += e.weight;
  }
  if (out.entries.size() == decision.entries.size()) return decision;
  if (out.entries.empty()) return out;  // degenerate: shared expert only
  for (auto& e : out.entries) e.weight /= sum;
  return out;
}

GateDecision apply_stimulation(const GateDecision& decision,
                               const std::vector<int>& stimulated_in_layer,
                               int top_k) {
  if (stimulated_in_layer.empty()) return decision;
  if (static_cast<int>(stimulated_in_layer.size()) > top_k)
    throw ConfigError("apply_stimulation: more stimulated experts than top_k");

  GateDecision out = decision;

  std::vector<int> missing;
  for (int e : stimulated_in_layer)
    if (!out.contains(e)) missing.push_back(e);
  std::sort(missing.begin(), missing.end());

  auto is_stimulated = [&](int id) {
    return std::find(stimulated_in_layer.begin(), stimulated_in_layer.end(),
                     id) != stimulated_in_layer.end();
  };

  // Evictions first: while at capacity, drop the lowest-weight
  // non-stimulated entry (ties drop the higher expert id).
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (static_cast<int>(out.entries.size()) < top_k) break;
    int victim = -1;
    for (int j = 0; j < static_cast<int>(out.entries.size()); ++j) {
      const auto& e = out.entries[j];
      if (is_stimulated(e.expert_id)) continue;
      if (victim < 0 || e.weight < out.entries[victim].weight ||
          (e.weight == out.entries[victim].weight &&
           e.expert_id > out.entries[victim].expert_id))
        victim = j;
    }
    if (victim < 0)
      throw ConfigError("apply_stimulation: no evictable entry");
    out.entries.erase(out.entries.begin() + victim);
  }

  // One max over the survivors, then all insertions and raises.
  Real max_w = 1.0;
  if (!out.entries.empty()) {
    max_w = 0.0;
    for (const auto& e : out.entries) max_w = std::max(max_w, e.weight);
  }
  for (auto& e : out.entries)
    if (is_stimulated(e.expert_id)) e.weight = max_w;
  for (int e : missing) out.entries.push_back({e, max_w});

  Real sum = 0.0;
  for (const auto& e : out.entries) sum += e.weight;
  for (auto& e : out.entries) e.weight /= sum;
  return out;
}

bool LayerTuning::empty() const {
  for (const auto& v : suppressed)
    if (!v.empty()) return false;
  for (const auto& v : stimulated)
    if (!v.empty()) return false;
  return true;
}

LayerTuning split_by_layer(const TuningConfig& tuning, int n_layers,
                           int n_experts, int top_k) {
  LayerTuning lt;
  lt.suppressed.resize(n_layers);
  lt.stimulated.resize(n_layers);

  auto check = [&](const ExpertAddr& a, const char* kind) {
    if (a.layer_id < 0 || a.layer_id >= n_layers || a.expert_id < 0 ||
        a.expert_id >= n_experts) {
      std::ostringstream os;
      os << kind << " expert (" << a.layer_id << ", " << a.expert_id
         << ") out of bounds for " << n_layers << " layers x " << n_experts
         << " experts";
      throw ConfigError(os.str());
    }
  };

  for (const auto& a : tuning.suppressed) {
    check(a, "suppressed");
    auto& v = lt.suppressed[a.layer_id];
    if (std::find(v.begin(), v.end(), a.expert_id) == v.end())
      v.push_back(a.expert_id);
  }
  for (const auto& a : tuning.stimulated) {
    check(a, "stimulated");
    const auto& sup = lt.suppressed[a.layer_id];
    if (std::find(sup.begin(), sup.end(), a.expert_id) != sup.end()) {
      std::ostringstream os;
      os << "expert (" << a.layer_id << ", " << a.expert_id
         << ") is both suppressed and stimulated";
      throw ConfigError(os.str());
    }
    auto& v = lt.stimulated[a.layer_id];
    if (std::find(v.begin(), v.end(), a.expert_id) == v.end())
      v.push_back(a.expert_id);
  }
  for (int l = 0; l < n_layers; ++l) {
    if (static_cast<int>(lt.stimulated[l].size()) > top_k) {
      std::ostringstream os;
      os << "layer " << l << ": " << lt.stimulated[l].size()
         << " stimulated experts exceed top_k=" << top_k;
      throw ConfigError(os.str());
    }
  }
  return lt;
}

namespace {

void skip_ws(const std::string& s, std::size_t& i) {
  while (i < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
    } else if (s[i] == '#') {  // comment to end of line
      while (i < s.size() && s[i] != '\n') ++i;
    } else {
      break;
    }
  }
}

int parse_int(const std::string& s, std::size_t& i) {
  skip_ws(s, i);
  std::size_t start = i;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == start) throw DataError("expert tuple list: expected integer");
  return std::stoi(s.substr(start, i - start));
}

void expect(const std::string& s, std::size_t& i, char c) {
  skip_ws(s, i);
  if (i >= s.size() || s[i] != c) {
    std::ostringstream os;
    os << "expert tuple list: expected '" << c << "' at offset " << i;
    throw DataError(os.str());
  }
  ++i;
}

ExpertAddr parse_pair(const std::string& s, std::size_t& i) {
  expect(s, i, '(');
  ExpertAddr a;
  a.layer_id = parse_int(s, i);
  expect(s, i, ',');
  a.expert_id = parse_int(s, i);
  expect(s, i, ')');
  if (a.layer_id < 0 || a.expert_id < 0)
    throw DataError("expert tuple list: negative index");
  return a;
}

}  // namespace

std::vector<ExpertAddr> parse_expert_tuples(const std::string& text) {
  std::vector<ExpertAddr> out;
  std::size_t i = 0;
  skip_ws(text, i);
  if (i >= text.size()) return out;

  const bool bracketed = text[i] == '[';
  if (bracketed) ++i;
  skip_ws(text, i);
  while (i < text.size() && text[i] != ']') {
    out.push_back(parse_pair(text, i));
    skip_ws(text, i);
    if (i < text.size() && text[i] == ',') {
      ++i;
      skip_ws(text, i);
    }
  }
  if (bracketed) {
    expect(text, i, ']');
  }
  skip_ws(text, i);
  if (i != text.size())
    throw DataError("expert tuple list: trailing content after list");
  return out;
}

std::vector<ExpertAddr> load_expert_tuples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open expert tuple file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_expert_tuples(ss.str());
}

std::string format_expert_tuples(const std::vector<ExpertAddr>& experts) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (i) os << ", ";
    os << "(" << experts[i].layer_id << ", " << experts[i].expert_id << ")";
  }
  os << "]\n";
  return os.str();
}

void save_expert_tuples(const std::vector<ExpertAddr>& experts,
                        const std::string& path) {
  io::write_file_atomic(path, format_expert_tuples(experts));
}

}  // namespace mote
