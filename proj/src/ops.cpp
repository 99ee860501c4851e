#include "partwise/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace partwise {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

namespace {

template <class T>
void require_rank2(const BasicTensor<T>& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_string(a.shape()));
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * n, T{0});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  NodePtr<T> an = a.node(), bn = b.node();
  return detail::record<T>({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](TensorNode<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad) {
      auto ga = detail::grad_buffer(*an);
      const T* pb = bn->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      auto gb = detail::grad_buffer(*bn);
      const T* pa = an->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T av = pa[i * k + p];
          T* grow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += av * g[i * n + j];
        }
      }
    }
  });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  const auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  NodePtr<T> an = a.node();
  return detail::record<T>({n, m}, std::move(out), {&a}, [an, m, n](TensorNode<T>& self) {
    auto ga = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return detail::record<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    for (auto* input : {an.get(), bn.get()}) {
      if (!input->requires_grad) continue;
      auto g = detail::grad_buffer(*input);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return detail::record<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = detail::grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = detail::grad_buffer(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return detail::record<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = detail::grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = detail::grad_buffer(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "div");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return detail::record<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = detail::grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = detail::grad_buffer(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T d = bn->data[i];
        g[i] -= self.grad[i] * an->data[i] / (d * d);
      }
    }
  });
}

template <class T>
BasicTensor<T> add_row(const BasicTensor<T>& a, const BasicTensor<T>& row) {
  require_rank2(a, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (row.numel() != n) {
    throw DimensionError("add_row: row of shape " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(a.shape()));
  }
  std::vector<T> out(a.numel());
  const auto x = a.data(), r = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
  NodePtr<T> an = a.node(), rn = row.node();
  return detail::record<T>(a.shape(), std::move(out), {&a, &row}, [an, rn, m, n](TensorNode<T>& self) {
    if (an->requires_grad) {
      auto g = detail::grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (rn->requires_grad) {
      auto g = detail::grad_buffer(*rn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an, factor](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T offset) {
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + offset;
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& a, T temperature) {
  if (!(temperature > T{0})) throw ContractError("softmax_rows: temperature must be positive");
  const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
  const std::size_t n = a.rank() == 2 ? a.dim(1) : a.numel();
  const auto x = a.data();
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    T top = row[0];
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(row[j])) throw NumericError("softmax_rows: non-finite logit in row " + std::to_string(i));
      top = std::max(top, row[j]);
    }
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp((row[j] - top) / temperature);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an, m, n, temperature](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.data.data() + i * n;
      const T* dy = self.grad.data() + i * n;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot) / temperature;
    }
  });
}

template <class T>
BasicTensor<T> log_clamped(const BasicTensor<T>& a, T floor) {
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x[i], floor));
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an, floor](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = an->data[i];
      if (v > floor) g[i] += self.grad[i] / v;
    }
  });
}

template <class T>
BasicTensor<T> layer_norm_rows(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                               T eps) {
  require_rank2(x, "layer_norm_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm_rows: affine parameters " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match rows of " + shape_string(x.shape()));
  }
  const auto in = x.data(), gm = gamma.data(), bt = beta.data();
  std::vector<T> out(m * n), normalized(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = in.data() + i * n;
    T mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * inv_std[i];
      normalized[i * n + j] = h;
      out[i * n + j] = gm[j] * h + bt[j];
    }
  }
  NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::record<T>(x.shape(), std::move(out), {&x, &gamma, &beta},
                           [xn, gn, bn, m, n, normalized = std::move(normalized),
                            inv_std = std::move(inv_std)](TensorNode<T>& self) {
                             const T* dy = self.grad.data();
                             if (gn->requires_grad) {
                               auto g = detail::grad_buffer(*gn);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * normalized[i * n + j];
                             }
                             if (bn->requires_grad) {
                               auto g = detail::grad_buffer(*bn);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j];
                             }
                             if (xn->requires_grad) {
                               auto g = detail::grad_buffer(*xn);
                               std::vector<T> dh(n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 T mean_dh{0}, mean_dh_h{0};
                                 for (std::size_t j = 0; j < n; ++j) {
                                   dh[j] = dy[i * n + j] * gn->data[j];
                                   mean_dh += dh[j];
                                   mean_dh_h += dh[j] * normalized[i * n + j];
                                 }
                                 mean_dh /= static_cast<T>(n);
                                 mean_dh_h /= static_cast<T>(n);
                                 for (std::size_t j = 0; j < n; ++j) {
                                   g[i * n + j] += inv_std[i] * (dh[j] - mean_dh - normalized[i * n + j] * mean_dh_h);
                                 }
                               }
                             }
                           });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * x[i] * (T{1} + std::erf(x[i] * inv_sqrt2));
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an, inv_sqrt2](TensorNode<T>& self) {
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = an->data[i];
      const T cdf = T(0.5) * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  NodePtr<T> an = a.node();
  return detail::record<T>(a.shape(), std::move(out), {&a}, [an, lo, hi](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = an->data[i];
      if (v >= lo && v <= hi) g[i] += self.grad[i];
    }
  });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total{0};
  for (T v : a.data()) total += v;
  NodePtr<T> an = a.node();
  return detail::record<T>({}, {total}, {&a}, [an](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <class T>
BasicTensor<T> l1_norm(const BasicTensor<T>& a) {
  T total{0};
  for (T v : a.data()) total += std::abs(v);
  NodePtr<T> an = a.node();
  return detail::record<T>({}, {total}, {&a}, [an](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = an->data[i];
      if (v > T{0}) g[i] += self.grad[0];
      else if (v < T{0}) g[i] -= self.grad[0];
    }
  });
}

template <class T>
BasicTensor<T> l2_norm(const BasicTensor<T>& a) {
  T total{0};
  for (T v : a.data()) total += v * v;
  const T norm = std::sqrt(total);
  NodePtr<T> an = a.node();
  return detail::record<T>({}, {norm}, {&a}, [an, norm](TensorNode<T>& self) {
    if (norm == T{0}) return;
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * an->data[i] / norm;
  });
}

template <class T>
BasicTensor<T> sum_squares(const BasicTensor<T>& a) {
  T total{0};
  for (T v : a.data()) total += v * v;
  NodePtr<T> an = a.node();
  return detail::record<T>({}, {total}, {&a}, [an](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T{2} * self.grad[0] * an->data[i];
  });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  NodePtr<T> an = a.node();
  return detail::record<T>(std::move(shape), a.to_vector(), {&a}, [an](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_rows");
  const std::size_t n = a.dim(1);
  if (begin + count > a.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const auto x = a.data();
  std::vector<T> out(x.begin() + static_cast<std::ptrdiff_t>(begin * n),
                     x.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  NodePtr<T> an = a.node();
  return detail::record<T>({count, n}, std::move(out), {&a}, [an, begin, n](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin + count > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const auto x = a.data();
  std::vector<T> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x[i * n + begin + j];
  NodePtr<T> an = a.node();
  return detail::record<T>({m, count}, std::move(out), {&a}, [an, begin, m, n, count](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].numel();
  std::size_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    const std::size_t cols = p.rank() == 2 ? p.dim(1) : p.numel();
    if (cols != n || p.rank() > 2) {
      throw DimensionError("concat_rows: " + shape_string(p.shape()) + " does not stack onto width " +
                           std::to_string(n));
    }
    rows += p.numel() / std::max<std::size_t>(n, 1);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<NodePtr<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  auto result = detail::record<T>({rows, n}, std::move(out), {}, nullptr);
  // record() only sees an initializer list; link variable-arity parents here.
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && grad_mode_enabled()) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts)
      if (p.requires_grad()) node.parents.push_back(p.node());
    node.backward = [nodes](TensorNode<T>& self) {
      std::size_t offset = 0;
      for (const auto& input : nodes) {
        const std::size_t len = input->data.size();
        if (input->requires_grad) {
          auto g = detail::grad_buffer(*input);
          for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
        }
        offset += len;
      }
    };
  }
  return result;
}

template <class T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  for (const auto& p : parts) require_rank2(p, "concat_cols");
  const std::size_t m = parts[0].dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: " + shape_string(p.shape()) + " has a different row count than " +
                           shape_string(parts[0].shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(m * total);
  std::size_t col = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const auto x = parts[t].data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[t]; ++j) out[i * total + col + j] = x[i * widths[t] + j];
    col += widths[t];
  }
  std::vector<NodePtr<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  auto result = detail::record<T>({m, total}, std::move(out), {}, nullptr);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && grad_mode_enabled()) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts)
      if (p.requires_grad()) node.parents.push_back(p.node());
    node.backward = [nodes, widths, m, total](TensorNode<T>& self) {
      std::size_t offset = 0;
      for (std::size_t t = 0; t < nodes.size(); ++t) {
        if (nodes[t]->requires_grad) {
          auto g = detail::grad_buffer(*nodes[t]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[t]; ++j) g[i * widths[t] + j] += self.grad[i * total + offset + j];
        }
        offset += widths[t];
      }
    };
  }
  return result;
}

template <class T>
BasicTensor<T> sample_gaussian(Rng& rng, Shape shape) {
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.normal());
  return BasicTensor<T>(std::move(shape), std::move(values));
}

#define PARTWISE_INSTANTIATE_OPS(T)                                                                      \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                              \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> add_row(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                               \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                          \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> log_clamped(const BasicTensor<T>&, T);                                         \
  template BasicTensor<T> layer_norm_rows(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                          const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);                                            \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> l1_norm(const BasicTensor<T>&);                                                \
  template BasicTensor<T> l2_norm(const BasicTensor<T>&);                                                \
  template BasicTensor<T> sum_squares(const BasicTensor<T>&);                                            \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                         \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);                   \
  template BasicTensor<T> slice_cols(const BasicTensor<T>&, std::size_t, std::size_t);                   \
  template BasicTensor<T> concat_rows(std::span<const BasicTensor<T>>);                                  \
  template BasicTensor<T> concat_cols(std::span<const BasicTensor<T>>);                                  \
  template BasicTensor<T> sample_gaussian(Rng&, Shape);

PARTWISE_INSTANTIATE_OPS(float)
PARTWISE_INSTANTIATE_OPS(double)

}  // namespace partwise
