#include "partwise/mixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace partwise {

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "none") return NoiseKind::kNone;
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "salt-pepper") return NoiseKind::kSaltPepper;
  if (name == "speckle") return NoiseKind::kSpeckle;
  throw ConfigError("unknown noise kind '" + std::string(name) + "' (none|gaussian|salt-pepper|speckle)");
}

MixNorm parse_mix_norm(std::string_view name) {
  if (name == "l2") return MixNorm::kL2;
  if (name == "l2sq") return MixNorm::kL2Squared;
  if (name == "l1") return MixNorm::kL1;
  if (name == "cosine") return MixNorm::kCosine;
  throw ConfigError("unknown mix norm '" + std::string(name) + "' (l2|l2sq|l1|cosine)");
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kSaltPepper: return "salt-pepper";
    case NoiseKind::kSpeckle: return "speckle";
  }
  return "none";
}

std::string_view to_string(MixNorm norm) {
  switch (norm) {
    case MixNorm::kL2: return "l2";
    case MixNorm::kL2Squared: return "l2sq";
    case MixNorm::kL1: return "l1";
    case MixNorm::kCosine: return "cosine";
  }
  return "l2";
}

MaskPair MaskPair::from_foreground(Tensor fg) {
  if (fg.rank() != 2) throw DimensionError("mask must be H x W, got " + shape_string(fg.shape()));
  std::vector<float> bg(fg.numel());
  const auto f = fg.data();
  for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = 1.0f - f[i];
  MaskPair pair;
  pair.bg = Tensor(fg.shape(), std::move(bg));
  pair.fg = std::move(fg);
  pair.present = true;
  return pair;
}

namespace {

template <class T>
BasicTensor<T> perturb(const BasicTensor<T>& code, Rng& rng, NoiseKind noise) {
  const std::size_t n = code.numel();
  switch (noise) {
    case NoiseKind::kNone:
      return code;
    case NoiseKind::kGaussian:
      return add(code, sample_gaussian<T>(rng, {n}));
    case NoiseKind::kSaltPepper: {
      std::vector<T> delta(n, T{0});
      for (auto& v : delta) {
        const double u = rng.uniform();
        if (u < 0.05) v = T{1};
        else if (u < 0.10) v = T{-1};
      }
      return add(code, BasicTensor<T>({n}, std::move(delta)));
    }
    case NoiseKind::kSpeckle:
      return mul(code, add_scalar(sample_gaussian<T>(rng, {n}), T{1}));
  }
  return code;
}

template <class T>
BasicTensor<T> weighted_columns(const BasicTensor<T>& maps, std::size_t begin, std::size_t count,
                                const BasicTensor<T>& weights) {
  const std::size_t n = maps.dim(0);
  return reshape(matmul(slice_cols(maps, begin, count), reshape(weights, {count, 1})), {n});
}

struct Tap {
  std::size_t index;
  double weight;
};

/// Four source taps per output pixel for half-pixel bilinear resampling.
std::vector<std::array<Tap, 4>> bilinear_taps(std::size_t gh, std::size_t gw, std::size_t out_h, std::size_t out_w) {
  auto axis = [](std::size_t out_i, std::size_t in, std::size_t out) {
    double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    return std::array<double, 3>{static_cast<double>(lo), static_cast<double>(hi), frac};
  };
  std::vector<std::array<Tap, 4>> taps(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = axis(y, gh, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = axis(x, gw, out_w);
      const auto r0 = static_cast<std::size_t>(y0) * gw, r1 = static_cast<std::size_t>(y1) * gw;
      const auto c0 = static_cast<std::size_t>(x0), c1 = static_cast<std::size_t>(x1);
      taps[y * out_w + x] = {Tap{r0 + c0, (1 - fy) * (1 - fx)}, Tap{r0 + c1, (1 - fy) * fx},
                             Tap{r1 + c0, fy * (1 - fx)}, Tap{r1 + c1, fy * fx}};
    }
  }
  return taps;
}

template <class T>
BasicTensor<T> as_type(const Tensor& t) {
  return BasicTensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()));
}

template <class T>
BasicTensor<T> alignment(const BasicTensor<T>& upsampled, const Tensor& mask, MixNorm norm) {
  const auto target = as_type<T>(mask);
  switch (norm) {
    case MixNorm::kL2: return l2_norm(sub(upsampled, target));
    case MixNorm::kL2Squared: return sum_squares(sub(upsampled, target));
    case MixNorm::kL1: return l1_norm(sub(upsampled, target));
    case MixNorm::kCosine: {
      const auto dot = sum(mul(upsampled, target));
      const auto denom = add_scalar(mul(l2_norm(upsampled), l2_norm(target)), T(1e-8));
      return sub(BasicTensor<T>::scalar(T{1}), div(dot, denom));
    }
  }
  throw ContractError("unhandled mix norm");
}

}  // namespace

template <class T>
LatentCodes<T> mix_latents(const DistanceMaps<T>& maps, const PartBank<T>& bank, Rng& rng, NoiseKind noise) {
  if (maps.values.rank() != 2 || maps.parts() != bank.size()) {
    throw DimensionError("mix_latents: distance maps " + shape_string(maps.values.shape()) + " do not match " +
                         std::to_string(bank.size()) + " parts");
  }
  LatentCodes<T> codes;
  codes.fg = weighted_columns(maps.values, 0, bank.fg_count, bank.alpha);
  codes.bg = weighted_columns(maps.values, bank.fg_count, bank.bg_count(), bank.beta);
  if (noise != NoiseKind::kNone) {
    codes.fg = perturb(codes.fg, rng, noise);
    codes.bg = perturb(codes.bg, rng, noise);
    codes.noisy = true;
  }
  return codes;
}

template <class T>
BasicTensor<T> interpolate(const BasicTensor<T>& code, std::size_t grid_h, std::size_t grid_w, std::size_t out_h,
                           std::size_t out_w) {
  if (code.numel() != grid_h * grid_w || grid_h == 0 || grid_w == 0) {
    throw DimensionError("interpolate: code " + shape_string(code.shape()) + " is not a " + std::to_string(grid_h) +
                         "x" + std::to_string(grid_w) + " grid");
  }
  if (out_h == 0 || out_w == 0) throw DimensionError("interpolate: empty target size");
  auto taps = bilinear_taps(grid_h, grid_w, out_h, out_w);
  const auto src = code.data();
  std::vector<T> out(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i) {
    T acc{0};
    for (const auto& tap : taps[i]) acc += static_cast<T>(tap.weight) * src[tap.index];
    out[i] = acc;
  }
  auto in = code.node();
  return detail::record<T>({out_h, out_w}, std::move(out), {&code}, [in, taps = std::move(taps)](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*in);
    for (std::size_t i = 0; i < taps.size(); ++i)
      for (const auto& tap : taps[i]) g[tap.index] += static_cast<T>(tap.weight) * self.grad[i];
  });
}

template <class T>
BasicTensor<T> mixture_loss(const LatentCodes<T>& codes, const MaskPair& masks, std::size_t grid_h,
                            std::size_t grid_w, MixNorm norm) {
  if (!masks.present) return BasicTensor<T>::scalar(T{0});
  const std::size_t h = masks.fg.dim(0), w = masks.fg.dim(1);
  const auto fg = alignment(interpolate(codes.fg, grid_h, grid_w, h, w), masks.fg, norm);
  const auto bg = alignment(interpolate(codes.bg, grid_h, grid_w, h, w), masks.bg, norm);
  return add(fg, bg);
}

template <class T>
BasicTensor<T> foreground_image(const BasicTensor<T>& image, const LatentCodes<T>& codes, std::size_t grid_h,
                                std::size_t grid_w) {
  if (image.rank() != 3) throw DimensionError("foreground_image expects H x W x C, got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const auto mask = interpolate(clamp(codes.fg, T{0}, T{1}), grid_h, grid_w, h, w);
  std::vector<T> out(image.numel());
  const auto x = image.data(), m = mask.data();
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = x[p * c + ch] * m[p];
  auto xn = image.node(), mn = mask.node();
  return detail::record<T>(image.shape(), std::move(out), {&image, &mask}, [xn, mn, c](TensorNode<T>& self) {
    const std::size_t pixels = mn->data.size();
    if (xn->requires_grad) {
      auto g = detail::grad_buffer(*xn);
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) g[p * c + ch] += self.grad[p * c + ch] * mn->data[p];
    }
    if (mn->requires_grad) {
      auto g = detail::grad_buffer(*mn);
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) g[p] += self.grad[p * c + ch] * xn->data[p * c + ch];
    }
  });
}

#define PARTWISE_INSTANTIATE_MIXTURE(T)                                                                            \
  template LatentCodes<T> mix_latents(const DistanceMaps<T>&, const PartBank<T>&, Rng&, NoiseKind);                \
  template BasicTensor<T> interpolate(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template BasicTensor<T> mixture_loss(const LatentCodes<T>&, const MaskPair&, std::size_t, std::size_t, MixNorm); \
  template BasicTensor<T> foreground_image(const BasicTensor<T>&, const LatentCodes<T>&, std::size_t, std::size_t);

PARTWISE_INSTANTIATE_MIXTURE(float)
PARTWISE_INSTANTIATE_MIXTURE(double)

}  // namespace partwise
