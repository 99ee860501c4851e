#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "partwise/mixture.hpp"

namespace partwise {

/// Shapes available as foreground classes, in class-id order.
inline constexpr std::size_t kShapeCount = 8;      // disk square triangle cross ring diamond ellipse ell
/// Procedural background textures, in texture-id order.
inline constexpr std::size_t kTextureCount = 10;   // hstripes vstripes checker diagonal dots rings gradient speckle waves grid

std::string_view shape_name(std::size_t class_id);
std::string_view texture_name(std::size_t bg_id);

struct GenConfig {
  std::size_t classes = 4;
  std::size_t textures = 8;
  std::size_t train_per_class = 500;
  std::size_t eval_per_class = 100;
  std::size_t image_size = 32;
  double rho = 0.95;             // P(background = the class-assigned texture)
  double mask_coverage = 1.0;    // fraction of train samples that carry masks
  double mask_corruption = 0.0;  // fraction of mask pixels flipped, in blocks
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

enum class SplitTag { kTrain, kOriginal, kMSame, kMRand };
std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view text);

struct Sample {
  Tensor image;  // H x W x 3, values in [0, 1]
  std::size_t label = 0;
  MaskPair masks;     // what training may use (coverage and corruption applied)
  Tensor true_mask;   // exact foreground support, H x W; never corrupted
  std::size_t bg_id = 0;
  SplitTag split = SplitTag::kTrain;
  std::size_t instance = 0;  // foreground instance id
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> pool;  // held-out foregrounds, disjoint instances
};

/// Class c is assigned texture c. Deterministic in cfg (including the seed).
Dataset generate_dataset(const GenConfig& cfg);

struct EvalSplits {
  std::vector<Sample> original;
  std::vector<Sample> m_same;  // own class's texture, freshly rendered
  std::vector<Sample> m_rand;  // texture assigned to a different class
};

/// Recomposites each pool foreground (by its exact mask) onto new backgrounds.
/// Throws ConfigError when fewer than two classes are configured.
EvalSplits make_eval_splits(const std::vector<Sample>& pool, const GenConfig& cfg, std::uint64_t seed);

/// Renders one background texture with per-draw random parameters.
Tensor render_texture(std::size_t bg_id, std::size_t size, Rng& rng);

double bg_gap(double acc_same, double acc_rand);

/// Dataset directory: manifest.txt, img/<index>.pwt, mask/<index>.pwt.
/// Manifest records are "index label bg_id split has_mask instance",
/// tab-separated, after a '#' header line.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);

/// Samples of one split, in manifest order.
std::vector<Sample> select_split(const std::vector<Sample>& samples, SplitTag tag);

}  // namespace partwise
