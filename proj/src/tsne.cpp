#include "mote/tsne.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mote {

namespace {

MatX squared_distances(const MatX& x) {
  const int n = static_cast<int>(x.rows());
  MatX d = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Real v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

/// Conditional p_{j|i} for one row at precision beta, plus its Shannon
/// entropy in bits.
Real row_entropy(const VecX& dist_row, int i, Real beta, VecX& p_out) {
  const int n = static_cast<int>(dist_row.size());
  p_out.resize(n);
  Real min_d = std::numeric_limits<Real>::max();
  for (int j = 0; j < n; ++j)
    if (j != i) min_d = std::min(min_d, dist_row[j]);
  Real sum = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == i) {
      p_out[j] = 0.0;
      continue;
    }
    p_out[j] = std::exp(-beta * (dist_row[j] - min_d));
    sum += p_out[j];
  }
  Real entropy = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    p_out[j] /= sum;
    if (p_out[j] > 0) entropy -= p_out[j] * std::log2(p_out[j]);
  }
  return entropy;
}

}  // namespace

void TsneConfig::validate() const {
  if (!(perplexity > 0)) throw ConfigError("tsne: perplexity must be > 0");
  if (iterations < 1) throw ConfigError("tsne: iterations must be >= 1");
  if (!(learning_rate > 0))
    throw ConfigError("tsne: learning_rate must be > 0");
  if (early_exaggeration_factor < 1.0)
    throw ConfigError("tsne: early_exaggeration_factor must be >= 1");
  if (early_exaggeration_iters < 0)
    throw ConfigError("tsne: early_exaggeration_iters must be >= 0");
}

Affinities pairwise_affinities(const MatX& points, Real perplexity) {
  const int n = static_cast<int>(points.rows());
  if (n < 2) throw ConfigError("pairwise_affinities: need at least 2 points");
  if (perplexity >= n - 1) {
    std::ostringstream os;
    os << "pairwise_affinities: perplexity " << perplexity
       << " too large for " << n << " points";
    throw ConfigError(os.str());
  }

  MatX x = points;
  MatX d = squared_distances(x);

  Affinities out;
  Real min_offdiag = std::numeric_limits<Real>::max();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      min_offdiag = std::min(min_offdiag, d(i, j));
  if (min_offdiag == 0.0) {
    // exact duplicates break the entropy search; perturb deterministically
    Real scale = std::sqrt(d.maxCoeff());
    if (scale == 0.0) scale = 1.0;
    std::mt19937_64 rng(0x7f4a7c15);
    std::normal_distribution<Real> jitter(0.0, 1e-8 * scale);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < x.cols(); ++j) x(i, j) += jitter(rng);
    d = squared_distances(x);
    out.jittered = true;
  }

  const Real target = std::log2(perplexity);
  MatX cond = MatX::Zero(n, n);
  VecX p(n);
  for (int i = 0; i < n; ++i) {
    VecX dist_row = d.row(i).transpose();
    Real beta = 1.0, lo = 0.0, hi = std::numeric_limits<Real>::infinity();
    Real entropy = row_entropy(dist_row, i, beta, p);
    for (int it = 0; it < 200 && std::abs(entropy - target) > 1e-7; ++it) {
      if (entropy > target) {  // too flat: sharpen
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = lo == 0.0 ? beta * 0.5 : 0.5 * (beta + lo);
      }
      entropy = row_entropy(dist_row, i, beta, p);
    }
    cond.row(i) = p.transpose();
  }

  out.p = (cond + cond.transpose()) / (2.0 * n);
  return out;
}

Real tsne_kl(const MatX& p, const MatX& y) {
  const int n = static_cast<int>(y.rows());
  Real z = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      z += 2.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
  Real kl = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0) continue;
      const Real w = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      kl += p(i, j) * std::log(p(i, j) / (w / z));
    }
  return kl;
}

MatX tsne_gradient(const MatX& p, const MatX& y) {
  const int n = static_cast<int>(y.rows());
  MatX w(n, n);
  Real z = 0.0;
  for (int i = 0; i < n; ++i) {
    w(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const Real v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      w(i, j) = v;
      w(j, i) = v;
      z += 2.0 * v;
    }
  }
  MatX grad = MatX::Zero(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Real coeff = 4.0 * (p(i, j) - w(i, j) / z) * w(i, j);
      grad.row(i) += coeff * (y.row(i) - y.row(j));
    }
  return grad;
}

Embedding2D tsne(const MatX& points, const TsneConfig& config) {
  config.validate();
  const int n = static_cast<int>(points.rows());
  if (n < 3) throw ConfigError("tsne: need at least 3 points");

  Real perplexity = std::min(config.perplexity, n / 4.0);
  perplexity = std::max(perplexity, 1.01);
  if (perplexity >= n - 1) perplexity = (n - 1) * 0.75;

  Affinities aff = pairwise_affinities(points, perplexity);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<Real> init(0.0, 1e-4);
  MatX y(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) y(i, j) = init(rng);

  MatX velocity = MatX::Zero(n, 2);
  const MatX p_exaggerated = aff.p * config.early_exaggeration_factor;

  Real prev_kl = std::numeric_limits<Real>::max();
  int rising = 0;
  for (int it = 0; it < config.iterations; ++it) {
    const bool exaggerating = it < config.early_exaggeration_iters;
    const MatX& p_eff = exaggerating ? p_exaggerated : aff.p;
    const Real momentum = it < config.momentum_switch_iter
                              ? config.momentum_initial
                              : config.momentum_final;

    MatX grad = tsne_gradient(p_eff, y);
    velocity = momentum * velocity - config.learning_rate * grad;
    y += velocity;
    y.rowwise() -= y.colwise().mean();

    if (!exaggerating) {
      const Real kl = tsne_kl(aff.p, y);
      if (kl > prev_kl + 1e-6) {
        velocity.setZero();  // momentum restart
        if (++rising >= 50) {
          std::ostringstream os;
          os << "tsne diverged: KL rose " << rising
             << " consecutive iterations (at iteration " << it << ")";
          throw NumericError(os.str());
        }
      } else {
        rising = 0;
      }
      prev_kl = kl;
    }
  }

  Embedding2D emb;
  y.rowwise() -= y.colwise().mean();
  emb.y = y;
  emb.kl = tsne_kl(aff.p, y);
  emb.jittered = aff.jittered;
  if (!emb.y.allFinite()) throw NumericError("tsne: non-finite embedding");
  return emb;
}

}  // namespace mote
