#include <doctest.h>

#include <array>
#include <cmath>

#include "gradcheck.hpp"
#include "partwise/ops.hpp"
#include "partwise/rng.hpp"

using namespace partwise;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("matmul agrees with a triple loop") {
    Rng rng(1);
    const auto a = random_tensor(rng, {5, 7}), b = random_tensor(rng, {7, 3});
    const auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape{5, 3});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        float acc = 0;
        for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
        CHECK(c.at(i, j) == acc);
      }
  }

  TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), DimensionError);
  }

  TEST_CASE("softmax matches a double-precision oracle and sums to one") {
    Rng rng(2);
    const auto a = random_tensor(rng, {4, 6}, -5, 5);
    const auto s = softmax_rows(a, 0.5f);
    for (std::size_t r = 0; r < 4; ++r) {
      double mx = -1e300, total = 0, row_sum = 0;
      for (std::size_t c = 0; c < 6; ++c) mx = std::max(mx, a.at(r, c) / 0.5);
      for (std::size_t c = 0; c < 6; ++c) total += std::exp(a.at(r, c) / 0.5 - mx);
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(s.at(r, c) == doctest::Approx(std::exp(a.at(r, c) / 0.5 - mx) / total).epsilon(1e-6));
        row_sum += s.at(r, c);
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  TEST_CASE("softmax survives huge logits and rejects bad input") {
    const Tensor big({1, 3}, {1000.0f, 999.0f, -1000.0f});
    const auto s = softmax_rows(big);
    CHECK(std::isfinite(s.at(0)));
    CHECK(s.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-6));
    CHECK_THROWS_AS(softmax_rows(Tensor({1, 2}, {NAN, 0.0f})), NumericError);
    CHECK_THROWS_AS(softmax_rows(big, 0.0f), ContractError);
  }

  TEST_CASE("layer norm output has zero mean and unit variance per row") {
    Rng rng(3);
    const auto x = random_tensor(rng, {3, 16}, -4, 9);
    const auto y = layer_norm_rows(x, Tensor::full({16}, 1.0f), Tensor::zeros({16}));
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0, var = 0;
      for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
      mean /= 16;
      for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      CHECK(mean == doctest::Approx(0).epsilon(1e-5).scale(1));
      CHECK(var / 16 == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  TEST_CASE("gelu uses the exact erf form") {
    const Tensor x({3}, {-1.0f, 0.0f, 2.0f});
    const auto y = gelu(x);
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = x.at(i);
      CHECK(y.at(i) == doctest::Approx(0.5 * v * (1 + std::erf(v / std::sqrt(2.0)))).epsilon(1e-6));
    }
  }

  TEST_CASE("reductions and norms") {
    const Tensor x({2, 2}, {3.0f, -4.0f, 0.0f, 0.0f});
    CHECK(sum(x).item() == -1.0f);
    CHECK(mean(x).item() == -0.25f);
    CHECK(l1_norm(x).item() == 7.0f);
    CHECK(l2_norm(x).item() == 5.0f);
    CHECK(sum_squares(x).item() == 25.0f);
  }

  TEST_CASE("l2 norm gradient is zero at the origin") {
    Tensor x = Tensor::zeros({3});
    x.set_requires_grad(true);
    l2_norm(x).backward();
    for (float g : x.grad()) CHECK(g == 0.0f);
  }

  TEST_CASE("slices and concatenation round-trip") {
    Rng rng(4);
    const auto a = random_tensor(rng, {4, 5});
    const std::array<Tensor, 2> rows{slice_rows(a, 0, 1), slice_rows(a, 1, 3)};
    const std::array<Tensor, 2> cols{slice_cols(a, 0, 2), slice_cols(a, 2, 3)};
    CHECK(concat_rows<float>(rows).to_vector() == a.to_vector());
    CHECK(concat_cols<float>(cols).to_vector() == a.to_vector());
    CHECK_THROWS_AS(slice_rows(a, 3, 2), DimensionError);
  }

  TEST_CASE("backward accumulates across calls and frees the graph") {
    Tensor w({2}, {1.0f, 2.0f});
    w.set_requires_grad(true);
    auto loss = sum(mul(w, w));
    loss.backward();
    CHECK(w.grad()[0] == 2.0f);
    sum(mul(w, w)).backward();
    CHECK(w.grad()[1] == 8.0f);
    CHECK(loss.node()->parents.empty());
    CHECK_THROWS_AS(w.backward(), ContractError);
  }

  TEST_CASE("no-grad mode records nothing") {
    Tensor w({2}, {1.0f, 2.0f});
    w.set_requires_grad(true);
    NoGradGuard guard;
    const auto y = mul(w, w);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }

  TEST_CASE("rng streams are reproducible and roughly standard normal") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng n(7);
    double mean = 0, sq = 0;
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
      const double v = n.normal();
      mean += v;
      sq += v * v;
    }
    mean /= count;
    CHECK(std::abs(mean) < 0.05);
    CHECK(sq / count == doctest::Approx(1.0).epsilon(0.05));
    CHECK(Rng::derive(1, 2).next_u64() != Rng::derive(1, 3).next_u64());
  }

  TEST_CASE("gradient checker flags a wrong backward") {
    using D = BasicTensor<double>;
    D x({3}, {0.5, -0.2, 1.1});
    x.set_requires_grad(true);
    auto wrong_square = [x] {
      std::vector<double> out(3);
      for (int i = 0; i < 3; ++i) out[i] = x.at(i) * x.at(i);
      auto node = x.node();
      return sum(detail::record<double>({3}, out, {&x}, [node](TensorNode<double>& self) {
        auto g = detail::grad_buffer(*node);
        for (int i = 0; i < 3; ++i) g[i] += self.grad[i] * node->data[i];  // missing factor 2
      }));
    };
    const auto result = testing::check_gradients("wrong", testing::as_params({x}), wrong_square);
    CHECK_FALSE(result.ok());
  }
}
