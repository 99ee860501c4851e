#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "partwise/ops.hpp"
#include "partwise/rng.hpp"

namespace partwise {

template <class T>
using NamedParams = std::vector<std::pair<std::string, BasicTensor<T>>>;

/// Registers `tensor` as a trainable leaf under `name`.
template <class T>
void add_param(NamedParams<T>& out, std::string name, BasicTensor<T> tensor) {
  out.emplace_back(std::move(name), std::move(tensor));
}

template <class T>
BasicTensor<T> trainable(BasicTensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

/// y = x W + b with W stored (in x out).
template <class T>
struct Linear {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  /// LeCun-normal weights (std 1/sqrt(in)), zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    Linear layer;
    layer.weight = trainable(scale(sample_gaussian<T>(rng, {in, out}), T(1) / std::sqrt(static_cast<T>(in))));
    layer.bias = trainable(BasicTensor<T>::zeros({out}));
    return layer;
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return add_row(matmul(x, weight), bias); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".weight", weight);
    add_param(out, prefix + ".bias", bias);
  }
};

template <class T>
struct LayerNorm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;

  static LayerNorm init(std::size_t width) {
    return {trainable(BasicTensor<T>::full({width}, T{1})), trainable(BasicTensor<T>::zeros({width}))};
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return layer_norm_rows(x, gamma, beta, T(1e-5)); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".gamma", gamma);
    add_param(out, prefix + ".beta", beta);
  }
};

/// Two linear layers with a GELU in between.
template <class T>
struct FeedForward {
  Linear<T> fc1;
  Linear<T> fc2;

  static FeedForward init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    return {Linear<T>::init(in, hidden, rng), Linear<T>::init(hidden, out, rng)};
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return fc2(gelu(fc1(x))); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

}  // namespace partwise
