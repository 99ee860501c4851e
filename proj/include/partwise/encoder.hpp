#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "partwise/layers.hpp"
#include "partwise/partbank.hpp"

namespace partwise {

struct EncoderConfig {
  std::size_t image_size = 32;  // square H = W
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t parts = 16;
  std::size_t fg_parts = 10;
  std::size_t mlp_ratio = 4;
  std::size_t upsampler_hidden = 0;  // 0 selects the patch dimension

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;

  [[nodiscard]] std::size_t grid() const { return image_size / patch_size; }
  [[nodiscard]] std::size_t num_patches() const { return grid() * grid(); }
  [[nodiscard]] std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  [[nodiscard]] std::size_t head_dim() const { return model_dim / heads; }
  [[nodiscard]] std::size_t hidden_for_upsampler() const {
    return upsampler_hidden ? upsampler_hidden : patch_dim();
  }
};

/// Flattened F x F x C patches in row-major patch order.
template <class T>
struct PatchGrid {
  BasicTensor<T> patches;  // N x (F*F*C)
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

/// Splits an H x W x C image into non-overlapping F x F patches, ordered
/// top-left to bottom-right; each patch row is flattened as (y, x, c).
template <class T>
PatchGrid<T> patchify(const BasicTensor<T>& image, std::size_t patch);

/// Projection weights for multi-head attention. `qkv` is D x 3D laid out as
/// [Q | K | V]; head h owns columns [h*Dh, (h+1)*Dh) of each block. `out` is
/// the D x D output map applied to the concatenated heads.
template <class T>
struct AttentionWeights {
  BasicTensor<T> qkv;
  BasicTensor<T> out;

  static AttentionWeights init(std::size_t model_dim, Rng& rng);
  void collect(NamedParams<T>& out_params, const std::string& prefix) const;
};

template <class T>
struct AttentionResult {
  BasicTensor<T> values;                   // T x D (or T x Dh for one head)
  std::vector<BasicTensor<T>> attention;  // per head, T x T, row-stochastic
};

/// Single-head qkv attention: [q|k|v] = z W, A = softmax(q k^T / sqrt(Dh)),
/// output A v. `qkv_weight` is D x 3Dh.
template <class T>
AttentionResult<T> self_attention(const BasicTensor<T>& z, const BasicTensor<T>& qkv_weight);

/// Heads computed in parallel, concatenated, then mapped by `weights.out`.
template <class T>
AttentionResult<T> multi_head(const BasicTensor<T>& z, std::size_t heads, const AttentionWeights<T>& weights);

template <class T>
struct EncoderBlock {
  LayerNorm<T> norm1;
  AttentionWeights<T> msa;
  LayerNorm<T> norm2;
  FeedForward<T> mlp;

  PartBank<T> parts;
  std::optional<Linear<T>> token_to_patch;  // blocks after the first: tokens -> patch space
  FeedForward<T> upsampler;                 // K -> patch_dim
  Linear<T> part_embed;                     // patch_dim -> D
  BasicTensor<T> mca_cls;                   // learned cls slot of the cross-attention stream
  AttentionWeights<T> mca;
};

/// Cross-attention stream over distance maps: upsample each row K -> patch
/// dim, embed to D, prepend the cls slot, then multi-head attention.
template <class T>
AttentionResult<T> cross_attention_features(const DistanceMaps<T>& maps, const EncoderBlock<T>& block,
                                            std::size_t heads);

template <class T>
struct EncoderParams {
  Linear<T> patch_embed;
  BasicTensor<T> cls_token;  // D
  BasicTensor<T> pos_embed;  // (N+1) x D
  std::vector<EncoderBlock<T>> blocks;
  LayerNorm<T> final_norm;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);
  void collect(NamedParams<T>& out, const std::string& prefix) const;
};

template <class T>
struct Features {
  BasicTensor<T> tokens;  // (N+1) x D after the final norm
  BasicTensor<T> cls;     // D, equal to tokens row 0
  DistanceMaps<T> last_maps;
  std::vector<BasicTensor<T>> msa_attention;  // final block, per head
  std::vector<BasicTensor<T>> mca_attention;  // final block, per head
};

/// Runs every block: z_p from the pre-norm self-attention/MLP path, z_d from
/// cross-attention over that block's distance maps, block output z_p + z_d.
template <class T>
Features<T> encode(const BasicTensor<T>& image, const EncoderParams<T>& params, const EncoderConfig& config);

/// Same as encode() on already patchified input.
template <class T>
Features<T> encode_patches(const BasicTensor<T>& patches, const EncoderParams<T>& params,
                           const EncoderConfig& config);

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;

}  // namespace partwise
