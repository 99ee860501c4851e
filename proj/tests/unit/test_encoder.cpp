#include <doctest.h>

#include <cmath>
#include <set>

#include "partwise/encoder.hpp"

using namespace partwise;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.blocks = 2;
  c.heads = 2;
  c.model_dim = 8;
  c.parts = 6;
  c.fg_parts = 4;
  return c;
}

Tensor ramp_image(std::size_t h, std::size_t w, std::size_t c) {
  std::vector<float> v(h * w * c);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  return Tensor({h, w, c}, std::move(v));
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("config validation") {
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.image_size = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.fg_parts = c.parts;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("patchify orders patches row-major and flattens (y, x, c)") {
    const auto image = ramp_image(4, 6, 2);
    const auto grid = patchify(image, 2);
    CHECK(grid.grid_h == 2);
    CHECK(grid.grid_w == 3);
    REQUIRE(grid.patches.shape() == Shape{6, 8});
    for (std::size_t gy = 0; gy < 2; ++gy)
      for (std::size_t gx = 0; gx < 3; ++gx)
        for (std::size_t y = 0; y < 2; ++y)
          for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t ch = 0; ch < 2; ++ch) {
              const float expected = static_cast<float>(((gy * 2 + y) * 6 + gx * 2 + x) * 2 + ch);
              CHECK(grid.patches.at(gy * 3 + gx, (y * 2 + x) * 2 + ch) == expected);
            }
    CHECK_THROWS_AS(patchify(ramp_image(5, 6, 2), 2), DimensionError);
  }

  TEST_CASE("single-head attention matches a direct evaluation") {
    Rng rng(1);
    const auto z = sample_gaussian<double>(rng, {4, 3});
    const auto w = sample_gaussian<double>(rng, {3, 6});
    const auto r = self_attention(z, w);
    const auto proj = matmul(z, w);  // q = cols 0-1, k = 2-3, v = 4-5
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> logits(4);
      double mx = -1e300, total = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        logits[j] = (proj.at(i, 0) * proj.at(j, 2) + proj.at(i, 1) * proj.at(j, 3)) / std::sqrt(2.0);
        mx = std::max(mx, logits[j]);
      }
      for (auto& l : logits) total += (l = std::exp(l - mx));
      for (std::size_t d = 0; d < 2; ++d) {
        double out = 0;
        for (std::size_t j = 0; j < 4; ++j) out += logits[j] / total * proj.at(j, 4 + d);
        CHECK(r.values.at(i, d) == doctest::Approx(out).epsilon(1e-12));
      }
      double row = 0;
      for (std::size_t j = 0; j < 4; ++j) row += r.attention[0].at(i, j);
      CHECK(row == doctest::Approx(1.0));
    }
  }

  TEST_CASE("multi-head attention rejects indivisible widths") {
    Rng rng(2);
    const auto w = AttentionWeights<float>::init(6, rng);
    CHECK_THROWS_AS(multi_head(Tensor::zeros({3, 6}), 4, w), ConfigError);
    const auto ok = multi_head(sample_gaussian<float>(rng, {3, 6}), 3, w);
    CHECK(ok.attention.size() == 3);
    CHECK(ok.values.shape() == Shape{3, 6});
  }

  TEST_CASE("encode produces the documented feature shapes") {
    const auto cfg = small_config();
    Rng rng(3);
    const auto params = EncoderParams<float>::init(cfg, rng);
    const auto image = sample_gaussian<float>(rng, {8, 8, 3});
    const auto f = encode(image, params, cfg);
    CHECK(f.tokens.shape() == Shape{5, 8});
    CHECK(f.cls.shape() == Shape{8});
    for (std::size_t d = 0; d < 8; ++d) CHECK(f.cls.at(d) == f.tokens.at(0, d));
    CHECK(f.last_maps.values.shape() == Shape{4, 6});
    REQUIRE(f.msa_attention.size() == 2);
    REQUIRE(f.mca_attention.size() == 2);
    CHECK(f.msa_attention[0].shape() == Shape{5, 5});
    CHECK(f.mca_attention[1].shape() == Shape{5, 5});
    CHECK_THROWS_AS(encode(sample_gaussian<float>(rng, {16, 16, 3}), params, cfg), DimensionError);
  }

  TEST_CASE("first-block maps come from raw patches") {
    auto cfg = small_config();
    cfg.blocks = 1;
    Rng rng(4);
    const auto params = EncoderParams<double>::init(cfg, rng);
    const auto image = sample_gaussian<double>(rng, {8, 8, 3});
    const auto f = encode(image, params, cfg);
    const auto expected = distance_maps(patchify(image, 4).patches, params.blocks[0].parts);
    for (std::size_t i = 0; i < expected.values.numel(); ++i) {
      CHECK(f.last_maps.values.at(i) == doctest::Approx(expected.values.at(i)));
    }
    CHECK_FALSE(params.blocks[0].token_to_patch.has_value());
  }

  TEST_CASE("parameter names are unique and init is seeded") {
    const auto cfg = small_config();
    Rng a(5), b(5);
    const auto pa = EncoderParams<float>::init(cfg, a);
    const auto pb = EncoderParams<float>::init(cfg, b);
    NamedParams<float> na, nb;
    pa.collect(na, "");
    pb.collect(nb, "");
    std::set<std::string> names;
    for (const auto& [name, t] : na) names.insert(name);
    CHECK(names.size() == na.size());
    CHECK(names.count("block1.parts.P") == 1);
    CHECK(names.count("block1.token_to_patch.weight") == 1);
    CHECK(names.count("block0.token_to_patch.weight") == 0);
    for (std::size_t i = 0; i < na.size(); ++i) {
      CHECK(na[i].second.to_vector() == nb[i].second.to_vector());
      CHECK(na[i].second.requires_grad());
    }
  }
}
