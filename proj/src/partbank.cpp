#include "partwise/partbank.hpp"

#include <cmath>

namespace partwise {

template <class T>
PartBank<T> PartBank<T>::init(std::size_t count, std::size_t fg_count, std::size_t part_dim, Rng& rng) {
  if (fg_count == 0 || fg_count >= count) {
    throw ConfigError("part bank needs 0 < n_f < K, got n_f=" + std::to_string(fg_count) +
                      " K=" + std::to_string(count));
  }
  if (part_dim == 0) throw ConfigError("part dimension must be positive");
  PartBank bank;
  bank.fg_count = fg_count;
  const double stddev = std::pow(static_cast<double>(part_dim), -0.25);
  std::vector<T> values(count * part_dim);
  for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
  bank.parts = BasicTensor<T>({count, part_dim}, std::move(values));
  bank.alpha = BasicTensor<T>::full({fg_count}, T{1} / static_cast<T>(fg_count));
  bank.beta = BasicTensor<T>::full({count - fg_count}, T{1} / static_cast<T>(count - fg_count));
  bank.parts.set_requires_grad(true);
  bank.alpha.set_requires_grad(true);
  bank.beta.set_requires_grad(true);
  return bank;
}

template <class T>
DistanceMaps<T> distance_maps(const BasicTensor<T>& patches, const PartBank<T>& bank) {
  if (patches.rank() != 2 || patches.dim(1) != bank.part_dim()) {
    throw DimensionError("distance_maps: patches " + shape_string(patches.shape()) + " do not match parts " +
                         shape_string(bank.parts.shape()));
  }
  return {matmul(patches, transpose(bank.parts))};
}

template <class T>
BasicTensor<T> gram_residual(const BasicTensor<T>& rows) {
  const auto gram = matmul(rows, transpose(rows));
  return sub(gram, BasicTensor<T>::eye(rows.dim(0)));
}

namespace {

void symmetric_matvec(const std::vector<double>& m, std::size_t n, const std::vector<double>& x,
                      std::vector<double>& y) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += m[i * n + j] * x[j];
    y[i] = acc;
  }
}

double norm2(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

constexpr unsigned kMaxRestarts = 3;
constexpr unsigned kStarts = 8;  // independent random starts; the largest estimate wins

}  // namespace

template <class T>
SpectralEstimate<T> spectral_norm_power(const BasicTensor<T>& matrix, unsigned iters, Rng& rng) {
  if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1)) {
    throw DimensionError("spectral_norm_power expects a square matrix, got " + shape_string(matrix.shape()));
  }
  if (iters == 0) throw ContractError("spectral_norm_power needs at least one iteration");
  const std::size_t n = matrix.dim(0);
  const std::vector<double> m(matrix.data().begin(), matrix.data().end());

  SpectralEstimate<T> result;
  std::vector<double> v(n), u(n), direction(n), best_direction;
  double best = -1.0;
  unsigned collapses = 0, finished = 0;
  while (finished < kStarts && collapses <= kMaxRestarts) {
    for (auto& x : v) x = rng.normal();
    const double v0 = norm2(v);
    for (auto& x : v) x /= v0;
    bool collapsed = false;
    for (unsigned it = 0; it < iters; ++it) {
      symmetric_matvec(m, n, v, u);
      const double nu = norm2(u);
      if (nu == 0.0 || !std::isfinite(nu)) {
        collapsed = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) direction[i] = u[i] / nu;
      symmetric_matvec(m, n, direction, v);
      const double nv = norm2(v);
      if (nv == 0.0) break;  // M^2 direction == 0: estimate is exactly 0
      for (auto& x : v) x /= nv;
    }
    if (collapsed) {
      ++collapses;
      continue;
    }
    ++finished;
    symmetric_matvec(m, n, direction, u);
    if (const double estimate = norm2(u); estimate > best) {
      best = estimate;
      best_direction = direction;
    }
  }
  if (finished > 0) {
    auto pinned = PinnedConstants<T>::pin(std::vector<T>(best_direction.begin(), best_direction.end()));
    const BasicTensor<T> x({n, 1}, std::move(pinned));
    result.sigma = l2_norm(matmul(matrix, x));
    result.restarts = collapses;
    return result;
  }
  result.sigma = BasicTensor<T>::scalar(T{0});
  result.degenerate = true;
  result.restarts = kMaxRestarts;
  return result;
}

template <class T>
QualityTerms<T> quality_loss(const PartBank<T>& bank, T lambda_s, T lambda_o, unsigned iters, Rng& rng) {
  if (lambda_s < T{0} || lambda_o < T{0}) throw ContractError("quality_loss weights must be non-negative");
  QualityTerms<T> terms;
  terms.sparse = scale(l1_norm(bank.parts), lambda_s);
  const auto fg = spectral_norm_power(gram_residual(bank.foreground()), iters, rng);
  const auto bg = spectral_norm_power(gram_residual(bank.background()), iters, rng);
  terms.ortho = scale(add(fg.sigma, bg.sigma), lambda_o);
  terms.total = add(terms.sparse, terms.ortho);
  terms.degenerate = fg.degenerate || bg.degenerate;
  return terms;
}

template <class T>
PartNorms part_norms(const PartBank<T>& bank) {
  PartNorms norms;
  for (T v : bank.parts.data()) norms.l1 += std::abs(static_cast<double>(v));
  const std::size_t nf = bank.fg_count, d = bank.part_dim();
  const auto p = bank.parts.data();
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = 0; j < nf; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(p[i * d + c]) * static_cast<double>(p[j * d + c]);
      norms.fg_gram_l1 += std::abs(dot - (i == j ? 1.0 : 0.0));
    }
  }
  return norms;
}

#define PARTWISE_INSTANTIATE_PARTBANK(T)                                                              \
  template struct PartBank<T>;                                                                        \
  template DistanceMaps<T> distance_maps(const BasicTensor<T>&, const PartBank<T>&);                  \
  template BasicTensor<T> gram_residual(const BasicTensor<T>&);                                       \
  template SpectralEstimate<T> spectral_norm_power(const BasicTensor<T>&, unsigned, Rng&);            \
  template QualityTerms<T> quality_loss(const PartBank<T>&, T, T, unsigned, Rng&);                    \
  template PartNorms part_norms(const PartBank<T>&);

PARTWISE_INSTANTIATE_PARTBANK(float)
PARTWISE_INSTANTIATE_PARTBANK(double)

}  // namespace partwise
