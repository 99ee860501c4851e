#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "partwise/rng.hpp"
#include "partwise/tensor.hpp"

namespace partwise {

// Differentiable tensor operations. Every function records a graph edge when
// gradient mode is on and an operand requires grad. Shape violations throw
// DimensionError with the offending shapes in the message.

/// (m x k) . (k x n) -> (m x n).
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

// Elementwise, identical shapes.
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// (m x n) + row vector (n), broadcast over rows.
template <class T>
BasicTensor<T> add_row(const BasicTensor<T>& a, const BasicTensor<T>& row);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T offset);

/// Row-wise softmax of a / temperature, max-subtracted. Throws NumericError on
/// non-finite input and ContractError unless temperature > 0.
template <class T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& a, T temperature = T{1});

/// log(max(a, floor)); the gradient is zero where the floor is active.
template <class T>
BasicTensor<T> log_clamped(const BasicTensor<T>& a, T floor);

/// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
template <class T>
BasicTensor<T> layer_norm_rows(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                               T eps = T(1e-5));

/// Exact (erf) GELU.
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a);

template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi);

// Reductions to a scalar.
template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a);
/// Sum of |a|; subgradient 0 at 0.
template <class T>
BasicTensor<T> l1_norm(const BasicTensor<T>& a);
/// Euclidean norm of the flattened tensor; gradient 0 at the origin.
template <class T>
BasicTensor<T> l2_norm(const BasicTensor<T>& a);
template <class T>
BasicTensor<T> sum_squares(const BasicTensor<T>& a);

// Layout.
template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);
template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t count);
template <class T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t count);
template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts);
template <class T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts);

/// I.i.d. standard normal entries drawn from `rng` in row-major order.
template <class T>
BasicTensor<T> sample_gaussian(Rng& rng, Shape shape);

}  // namespace partwise
