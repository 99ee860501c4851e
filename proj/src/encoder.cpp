#include "partwise/encoder.hpp"

#include <array>
#include <cmath>

namespace partwise {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
  if (image_size == 0 || channels == 0 || patch_size == 0) fail("image size, channels and patch size must be positive");
  if (image_size % patch_size != 0) {
    fail("image size " + std::to_string(image_size) + " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (blocks == 0) fail("at least one block is required");
  if (heads == 0 || model_dim == 0) fail("heads and model dim must be positive");
  if (model_dim % heads != 0) {
    fail("model dim " + std::to_string(model_dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (fg_parts == 0 || fg_parts >= parts) fail("need 0 < fg_parts < parts");
  if (mlp_ratio == 0) fail("mlp ratio must be positive");
}

template <class T>
PatchGrid<T> patchify(const BasicTensor<T>& image, std::size_t patch) {
  if (image.rank() != 3) throw DimensionError("patchify expects H x W x C, got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: image " + shape_string(image.shape()) + " is not divisible into " +
                         std::to_string(patch) + "x" + std::to_string(patch) + " patches");
  }
  const std::size_t gh = h / patch, gw = w / patch, dp = patch * patch * c;
  // index[r * dp + j] is the flat image offset feeding patch row r, column j.
  std::vector<std::size_t> index(gh * gw * dp);
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t row = gy * gw + gx;
            const std::size_t col = (y * patch + x) * c + ch;
            index[row * dp + col] = ((gy * patch + y) * w + (gx * patch + x)) * c + ch;
          }
  std::vector<T> out(index.size());
  const auto src = image.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = src[index[i]];
  auto in = image.node();
  auto patches = detail::record<T>({gh * gw, dp}, std::move(out), {&image}, [in, index](TensorNode<T>& self) {
    auto g = detail::grad_buffer(*in);
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
  });
  return {std::move(patches), gh, gw};
}

template <class T>
AttentionWeights<T> AttentionWeights<T>::init(std::size_t model_dim, Rng& rng) {
  const T s = T(1) / std::sqrt(static_cast<T>(model_dim));
  AttentionWeights w;
  w.qkv = trainable(scale(sample_gaussian<T>(rng, {model_dim, 3 * model_dim}), s));
  w.out = trainable(scale(sample_gaussian<T>(rng, {model_dim, model_dim}), s));
  return w;
}

template <class T>
void AttentionWeights<T>::collect(NamedParams<T>& out_params, const std::string& prefix) const {
  add_param(out_params, prefix + ".qkv", qkv);
  add_param(out_params, prefix + ".out", out);
}

namespace {

template <class T>
BasicTensor<T> attend(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                      BasicTensor<T>* weights_out) {
  const T temperature = std::sqrt(static_cast<T>(q.dim(1)));
  auto weights = softmax_rows(matmul(q, transpose(k)), temperature);
  if (weights_out) *weights_out = weights;
  return matmul(weights, v);
}

}  // namespace

template <class T>
AttentionResult<T> self_attention(const BasicTensor<T>& z, const BasicTensor<T>& qkv_weight) {
  if (qkv_weight.rank() != 2 || qkv_weight.dim(1) % 3 != 0 || z.rank() != 2 || z.dim(1) != qkv_weight.dim(0)) {
    throw DimensionError("self_attention: tokens " + shape_string(z.shape()) + " vs qkv weight " +
                         shape_string(qkv_weight.shape()));
  }
  const std::size_t dh = qkv_weight.dim(1) / 3;
  const auto qkv = matmul(z, qkv_weight);
  AttentionResult<T> result;
  result.attention.resize(1);
  result.values = attend(slice_cols(qkv, 0, dh), slice_cols(qkv, dh, dh), slice_cols(qkv, 2 * dh, dh),
                         &result.attention[0]);
  return result;
}

template <class T>
AttentionResult<T> multi_head(const BasicTensor<T>& z, std::size_t heads, const AttentionWeights<T>& weights) {
  if (z.rank() != 2) throw DimensionError("multi_head expects T x D tokens, got " + shape_string(z.shape()));
  const std::size_t d = z.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head: model dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (weights.qkv.shape() != Shape{d, 3 * d} || weights.out.shape() != Shape{d, d}) {
    throw DimensionError("multi_head: weights " + shape_string(weights.qkv.shape()) + "/" +
                         shape_string(weights.out.shape()) + " do not fit model dim " + std::to_string(d));
  }
  const std::size_t dh = d / heads;
  const auto qkv = matmul(z, weights.qkv);
  AttentionResult<T> result;
  result.attention.resize(heads);
  std::vector<BasicTensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    per_head.push_back(attend(slice_cols(qkv, h * dh, dh), slice_cols(qkv, d + h * dh, dh),
                              slice_cols(qkv, 2 * d + h * dh, dh), &result.attention[h]));
  }
  const auto joined = heads == 1 ? per_head[0] : concat_cols<T>(per_head);
  result.values = matmul(joined, weights.out);
  return result;
}

template <class T>
AttentionResult<T> cross_attention_features(const DistanceMaps<T>& maps, const EncoderBlock<T>& block,
                                            std::size_t heads) {
  const auto upsampled = block.upsampler(maps.values);
  const auto embedded = block.part_embed(upsampled);
  const std::size_t d = embedded.dim(1);
  const std::array<BasicTensor<T>, 2> rows{reshape(block.mca_cls, {1, d}), embedded};
  return multi_head(concat_rows<T>(rows), heads, block.mca);
}

template <class T>
EncoderParams<T> EncoderParams<T>::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.model_dim, dp = config.patch_dim(), n = config.num_patches();
  EncoderParams p;
  p.patch_embed = Linear<T>::init(dp, d, rng);
  p.cls_token = trainable(scale(sample_gaussian<T>(rng, {d}), T(0.02)));
  p.pos_embed = trainable(scale(sample_gaussian<T>(rng, {n + 1, d}), T(0.02)));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    EncoderBlock<T> block;
    block.norm1 = LayerNorm<T>::init(d);
    block.msa = AttentionWeights<T>::init(d, rng);
    block.norm2 = LayerNorm<T>::init(d);
    block.mlp = FeedForward<T>::init(d, d * config.mlp_ratio, d, rng);
    block.parts = PartBank<T>::init(config.parts, config.fg_parts, dp, rng);
    if (b > 0) block.token_to_patch = Linear<T>::init(d, dp, rng);
    block.upsampler = FeedForward<T>::init(config.parts, config.hidden_for_upsampler(), dp, rng);
    block.part_embed = Linear<T>::init(dp, d, rng);
    block.mca_cls = trainable(scale(sample_gaussian<T>(rng, {d}), T(0.02)));
    block.mca = AttentionWeights<T>::init(d, rng);
    p.blocks.push_back(std::move(block));
  }
  p.final_norm = LayerNorm<T>::init(d);
  return p;
}

template <class T>
void EncoderParams<T>::collect(NamedParams<T>& out, const std::string& prefix) const {
  patch_embed.collect(out, prefix + "patch_embed");
  add_param(out, prefix + "cls_token", cls_token);
  add_param(out, prefix + "pos_embed", pos_embed);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    const std::string at = prefix + "block" + std::to_string(b) + ".";
    block.norm1.collect(out, at + "norm1");
    block.msa.collect(out, at + "msa");
    block.norm2.collect(out, at + "norm2");
    block.mlp.collect(out, at + "mlp");
    add_param(out, at + "parts.P", block.parts.parts);
    add_param(out, at + "parts.alpha", block.parts.alpha);
    add_param(out, at + "parts.beta", block.parts.beta);
    if (block.token_to_patch) block.token_to_patch->collect(out, at + "token_to_patch");
    block.upsampler.collect(out, at + "upsampler");
    block.part_embed.collect(out, at + "part_embed");
    add_param(out, at + "mca_cls", block.mca_cls);
    block.mca.collect(out, at + "mca");
  }
  final_norm.collect(out, prefix + "final_norm");
}

template <class T>
Features<T> encode_patches(const BasicTensor<T>& patches, const EncoderParams<T>& params,
                           const EncoderConfig& config) {
  const std::size_t n = config.num_patches(), d = config.model_dim;
  if (patches.shape() != Shape{n, config.patch_dim()}) {
    throw DimensionError("encode: patches " + shape_string(patches.shape()) + " do not match config (" +
                         std::to_string(n) + ", " + std::to_string(config.patch_dim()) + ")");
  }
  const std::array<BasicTensor<T>, 2> head{reshape(params.cls_token, {1, d}), params.patch_embed(patches)};
  auto z = add(concat_rows<T>(head), params.pos_embed);

  Features<T> features;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& block = params.blocks[b];
    const auto patch_space = block.token_to_patch ? (*block.token_to_patch)(slice_rows(z, 1, n)) : patches;
    auto maps = distance_maps(patch_space, block.parts);

    auto msa = multi_head(block.norm1(z), config.heads, block.msa);
    const auto after_attention = add(z, msa.values);
    const auto z_p = add(after_attention, block.mlp(block.norm2(after_attention)));

    auto mca = cross_attention_features(maps, block, config.heads);
    z = add(z_p, mca.values);

    if (b + 1 == params.blocks.size()) {
      features.last_maps = std::move(maps);
      features.msa_attention = std::move(msa.attention);
      features.mca_attention = std::move(mca.attention);
    }
  }
  features.tokens = params.final_norm(z);
  features.cls = reshape(slice_rows(features.tokens, 0, 1), {d});
  return features;
}

template <class T>
Features<T> encode(const BasicTensor<T>& image, const EncoderParams<T>& params, const EncoderConfig& config) {
  if (image.shape() != Shape{config.image_size, config.image_size, config.channels}) {
    throw DimensionError("encode: image " + shape_string(image.shape()) + " does not match config");
  }
  return encode_patches(patchify(image, config.patch_size).patches, params, config);
}

#define PARTWISE_INSTANTIATE_ENCODER(T)                                                                      \
  template struct AttentionWeights<T>;                                                                       \
  template struct EncoderParams<T>;                                                                          \
  template PatchGrid<T> patchify(const BasicTensor<T>&, std::size_t);                                        \
  template AttentionResult<T> self_attention(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template AttentionResult<T> multi_head(const BasicTensor<T>&, std::size_t, const AttentionWeights<T>&);    \
  template AttentionResult<T> cross_attention_features(const DistanceMaps<T>&, const EncoderBlock<T>&,       \
                                                       std::size_t);                                         \
  template Features<T> encode(const BasicTensor<T>&, const EncoderParams<T>&, const EncoderConfig&);         \
  template Features<T> encode_patches(const BasicTensor<T>&, const EncoderParams<T>&, const EncoderConfig&);

PARTWISE_INSTANTIATE_ENCODER(float)
PARTWISE_INSTANTIATE_ENCODER(double)

}  // namespace partwise
