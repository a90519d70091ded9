#pragma once

#include "mote/types.hpp"

#include <cstdint>

namespace mote {

struct TsneConfig {
  Real perplexity = 30.0;  // clamped to N/4 for small inputs
  int iterations = 1000;
  Real learning_rate = 200.0;
  Real early_exaggeration_factor = 12.0;
  int early_exaggeration_iters = 250;
  Real momentum_initial = 0.5;
  Real momentum_final = 0.8;
  int momentum_switch_iter = 250;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Affinities {
  MatX p;               // N x N, symmetric, non-negative, sums to 1
  bool jittered = false;  // duplicate points were perturbed
};

/// Row-wise Gaussian affinities with bandwidths found by binary search so
/// each row's entropy hits log2(perplexity) (within 1e-5 for
/// non-degenerate rows), then symmetrized and normalized. Exact duplicate
/// points get a deterministic tiny jitter, reported in the result.
Affinities pairwise_affinities(const MatX& points, Real perplexity);

struct Embedding2D {
  MatX y;  // N x 2, recentered to mean zero
  Real kl = 0.0;
  bool jittered = false;
};

/// Gradient descent on KL(P||Q) with the 1-dof Student-t kernel: early
/// exaggeration, momentum schedule, momentum restarts whenever KL rises,
/// abort on persistent divergence. Deterministic for a fixed seed.
Embedding2D tsne(const MatX& points, const TsneConfig& config);

// Exposed for verification against finite differences.
Real tsne_kl(const MatX& p, const MatX& y);
MatX tsne_gradient(const MatX& p, const MatX& y);

}  // namespace mote
