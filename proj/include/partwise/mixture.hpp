#pragma once

#include <cstddef>
#include <string_view>

#include "partwise/partbank.hpp"

namespace partwise {

/// Perturbation added to latent codes during training.
enum class NoiseKind {
  kNone,
  kGaussian,    // + N(0, 1)
  kSaltPepper,  // + 1 or - 1, each with probability 0.05
  kSpeckle,     // * (1 + N(0, 1))
};

/// Distance used by the latent-code / mask alignment loss.
enum class MixNorm {
  kL2,         // Euclidean norm of the flattened difference
  kL2Squared,
  kL1,
  kCosine,     // 1 - cos(code, mask), epsilon 1e-8 in the denominator
};

NoiseKind parse_noise_kind(std::string_view name);
MixNorm parse_mix_norm(std::string_view name);
std::string_view to_string(NoiseKind kind);
std::string_view to_string(MixNorm norm);

/// Foreground / background codes, one value per patch.
template <class T>
struct LatentCodes {
  BasicTensor<T> fg;  // N
  BasicTensor<T> bg;  // N
  bool noisy = false;
};

/// Binary complementary masks at image resolution.
struct MaskPair {
  Tensor fg;  // H x W
  Tensor bg;  // H x W
  bool present = false;

  static MaskPair absent() { return {}; }
  /// fg must hold 0/1 values; bg is its complement.
  static MaskPair from_foreground(Tensor fg);
};

/// L_F = sum_{k < n_f} alpha_k D[:, k] (+ noise), L_B likewise over the
/// background columns with beta. Noise draws come from `rng`, L_F first.
template <class T>
LatentCodes<T> mix_latents(const DistanceMaps<T>& maps, const PartBank<T>& bank, Rng& rng, NoiseKind noise);

/// Bilinear upsampling (half-pixel centres, edge clamped) of a code laid out
/// as a grid_h x grid_w grid to an out_h x out_w map.
template <class T>
BasicTensor<T> interpolate(const BasicTensor<T>& code, std::size_t grid_h, std::size_t grid_w, std::size_t out_h,
                           std::size_t out_w);

/// ||I(L_F) - M_f|| + ||I(L_B) - M_b|| under `norm`; exactly zero, with no
/// graph, when the masks are absent.
template <class T>
BasicTensor<T> mixture_loss(const LatentCodes<T>& codes, const MaskPair& masks, std::size_t grid_h,
                            std::size_t grid_w, MixNorm norm = MixNorm::kL2);

/// x * I(clamp(L_F, 0, 1)) with the mask broadcast over channels.
template <class T>
BasicTensor<T> foreground_image(const BasicTensor<T>& image, const LatentCodes<T>& codes, std::size_t grid_h,
                                std::size_t grid_w);

}  // namespace partwise
