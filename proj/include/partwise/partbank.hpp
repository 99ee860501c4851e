#pragma once

#include <cstddef>

#include "partwise/ops.hpp"
#include "partwise/rng.hpp"
#include "partwise/tensor.hpp"

namespace partwise {

/// Learnable part dictionary: K part vectors of patch dimension, split into
/// foreground rows [0, fg_count) and background rows [fg_count, K), plus the
/// mixture weights that combine their distance maps into latent codes.
template <class T>
struct PartBank {
  BasicTensor<T> parts;  // K x part_dim
  BasicTensor<T> alpha;  // fg_count
  BasicTensor<T> beta;   // K - fg_count
  std::size_t fg_count = 0;

  /// Parts ~ N(0, 1/sqrt(part_dim)) (variance), alpha = 1/n_f, beta = 1/n_b.
  /// Throws ConfigError unless 0 < fg_count < count.
  static PartBank init(std::size_t count, std::size_t fg_count, std::size_t part_dim, Rng& rng);

  [[nodiscard]] std::size_t size() const { return parts.dim(0); }
  [[nodiscard]] std::size_t bg_count() const { return size() - fg_count; }
  [[nodiscard]] std::size_t part_dim() const { return parts.dim(1); }

  [[nodiscard]] BasicTensor<T> foreground() const { return slice_rows(parts, 0, fg_count); }
  [[nodiscard]] BasicTensor<T> background() const { return slice_rows(parts, fg_count, bg_count()); }
};

/// N x K patch-to-part dot products; column k belongs to part k.
template <class T>
struct DistanceMaps {
  BasicTensor<T> values;

  [[nodiscard]] std::size_t patches() const { return values.dim(0); }
  [[nodiscard]] std::size_t parts() const { return values.dim(1); }
};

template <class T>
DistanceMaps<T> distance_maps(const BasicTensor<T>& patches, const PartBank<T>& bank);

/// rows . rows^T - I, an (r x r) residual for an (r x d) row set.
template <class T>
BasicTensor<T> gram_residual(const BasicTensor<T>& rows);

template <class T>
struct SpectralEstimate {
  BasicTensor<T> sigma;     // scalar
  bool degenerate = false;  // power iteration collapsed on every restart
  unsigned restarts = 0;
};

/// Power-iteration estimate of max |eigenvalue| of a symmetric matrix.
///
/// Each round computes u = M v, v = M u and the estimate ||v|| / ||u||. Eight
/// independent random starts run `iters` rounds each and the largest estimate
/// is kept; every estimate is a lower bound, so this only tightens it. The
/// winning direction u / ||u|| is held constant, so the gradient flows only
/// through M. A start whose u vanishes is redrawn; after three such collapses
/// with no finished start the estimate is 0 with `degenerate` set.
template <class T>
SpectralEstimate<T> spectral_norm_power(const BasicTensor<T>& matrix, unsigned iters, Rng& rng);

template <class T>
struct QualityTerms {
  BasicTensor<T> sparse;  // lambda_s * ||P||_1
  BasicTensor<T> ortho;   // lambda_o * (sigma(P_F P_F^T - I) + sigma(P_B P_B^T - I))
  BasicTensor<T> total;
  bool degenerate = false;
};

template <class T>
QualityTerms<T> quality_loss(const PartBank<T>& bank, T lambda_s, T lambda_o, unsigned iters, Rng& rng);

/// Monitoring norms: entrywise ||P||_1 and ||P_F P_F^T - I||_1.
struct PartNorms {
  double l1 = 0.0;
  double fg_gram_l1 = 0.0;
};

template <class T>
PartNorms part_norms(const PartBank<T>& bank);

extern template struct PartBank<float>;
extern template struct PartBank<double>;

}  // namespace partwise
