#pragma once

// Independent reference implementations used to check the library. These
// deliberately avoid the library's own code paths.

#include "mote/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace oracles {

/// Full-sort top-k: indices of the k largest scores, ties toward the
/// lower index.
inline std::vector<int> topk_full_sort(const std::vector<double>& scores,
                                       int k) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Direct softmax over a plain vector.
inline std::vector<double> softmax_ref(const std::vector<double>& s) {
  double m = *std::max_element(s.begin(), s.end());
  std::vector<double> p(s.size());
  double sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    p[i] = std::exp(s[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Mean silhouette coefficient of labeled 2D points, textbook formula.
inline double silhouette(const mote::MatX& y, const std::vector<int>& labels) {
  const int n = static_cast<int>(y.rows());
  auto dist = [&](int i, int j) { return (y.row(i) - y.row(j)).norm(); };
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double a = 0, b = std::numeric_limits<double>::max();
    int na = 0;
    // mean intra-cluster distance
    for (int j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        a += dist(i, j);
        ++na;
      }
    if (na == 0) continue;
    a /= na;
    // smallest mean distance to another cluster
    std::vector<int> other_labels;
    for (int j = 0; j < n; ++j)
      if (labels[j] != labels[i]) other_labels.push_back(labels[j]);
    std::sort(other_labels.begin(), other_labels.end());
    other_labels.erase(std::unique(other_labels.begin(), other_labels.end()),
                       other_labels.end());
    for (int c : other_labels) {
      double m = 0;
      int nm = 0;
      for (int j = 0; j < n; ++j)
        if (labels[j] == c) {
          m += dist(i, j);
          ++nm;
        }
      b = std::min(b, m / nm);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / n;
}

/// Shannon entropy in bits of a probability row (zeros skipped).
inline double entropy_bits(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

}  // namespace oracles
