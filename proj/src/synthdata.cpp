#include "partwise/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "partwise/checkpoint.hpp"

namespace partwise {

namespace {

constexpr std::string_view kShapes[kShapeCount] = {"disk", "square", "triangle", "cross",
                                                   "ring", "diamond", "ellipse", "ell"};
constexpr std::string_view kTextures[kTextureCount] = {"hstripes", "vstripes", "checker", "diagonal", "dots",
                                                       "rings",    "gradient", "speckle", "waves",    "grid"};

// Stream ids keep every random decision independent of the others.
constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kPoolStream = 1ULL << 32;
constexpr std::uint64_t kCoverageStream = 1ULL << 40;
constexpr std::uint64_t kSplitStream = 1ULL << 41;

constexpr int kSupersample = 4;

/// Inside test in shape-local coordinates scaled so the shape spans [-1, 1].
bool inside_shape(std::size_t shape, double u, double v) {
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case 2: return v <= 0.7 && v >= -1.0 && std::abs(u) <= 0.95 * (v + 1.0) / 1.7;
    case 3: return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    case 4: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case 5: return std::abs(u) + std::abs(v) <= 1.0;
    case 6: return u * u + (v * v) / (0.45 * 0.45) <= 1.0;
    case 7: return (u >= -0.8 && u <= -0.2 && v >= -0.9 && v <= 0.9) || (v >= 0.3 && v <= 0.9 && u >= -0.8 && u <= 0.8);
    default: throw ContractError("unknown shape id " + std::to_string(shape));
  }
}

struct Foreground {
  std::vector<double> alpha;  // coverage fraction per pixel
  double color[3];
};

Foreground render_shape(std::size_t shape, std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double radius = rng.uniform(0.22, 0.36) * s;
  const double cx = rng.uniform(radius, s - radius);
  const double cy = rng.uniform(radius, s - radius);
  Foreground fg;
  for (double& c : fg.color) c = rng.uniform();
  fg.alpha.assign(size * size, 0.0);
  const double step = 1.0 / kSupersample;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) * step;
          const double py = static_cast<double>(y) + (sy + 0.5) * step;
          hits += inside_shape(shape, (px - cx) / radius, (py - cy) / radius);
        }
      }
      fg.alpha[y * size + x] = static_cast<double>(hits) / (kSupersample * kSupersample);
    }
  }
  return fg;
}

double frac(double x) { return x - std::floor(x); }

void flip_blocks(std::vector<float>& mask, std::size_t size, double fraction, Rng& rng) {
  auto remaining = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(mask.size())));
  const std::size_t block = std::max<std::size_t>(2, size / 8);
  const std::size_t span = size - std::min(block, size) + 1;
  std::vector<char> flipped(mask.size(), 0);
  while (remaining > 0) {
    const auto by = static_cast<std::size_t>(rng.below(span));
    const auto bx = static_cast<std::size_t>(rng.below(span));
    for (std::size_t y = by; y < std::min(by + block, size) && remaining > 0; ++y) {
      for (std::size_t x = bx; x < std::min(bx + block, size) && remaining > 0; ++x) {
        const std::size_t i = y * size + x;
        if (flipped[i]) continue;
        flipped[i] = 1;
        mask[i] = 1.0f - mask[i];
        --remaining;
      }
    }
  }
}

std::size_t draw_background(std::size_t label, const GenConfig& cfg, Rng& rng) {
  if (rng.bernoulli(cfg.rho)) return label;
  const auto other = static_cast<std::size_t>(rng.below(cfg.textures - 1));
  return other < label ? other : other + 1;
}

Sample render_sample(std::size_t label, std::size_t instance, SplitTag split, const GenConfig& cfg, Rng& rng) {
  const std::size_t size = cfg.image_size;
  Sample sample;
  sample.label = label;
  sample.instance = instance;
  sample.split = split;
  sample.bg_id = draw_background(label, cfg, rng);
  const auto fg = render_shape(label, size, rng);
  const auto bg = render_texture(sample.bg_id, size, rng);

  std::vector<float> pixels(size * size * 3);
  std::vector<float> support(size * size);
  const auto b = bg.data();
  for (std::size_t p = 0; p < size * size; ++p) {
    const double a = fg.alpha[p];
    for (std::size_t c = 0; c < 3; ++c) {
      pixels[p * 3 + c] = static_cast<float>(a * fg.color[c] + (1.0 - a) * b[p * 3 + c]);
    }
    support[p] = a > 0.0 ? 1.0f : 0.0f;
  }
  sample.image = Tensor({size, size, 3}, std::move(pixels));
  sample.true_mask = Tensor({size, size}, std::move(support));
  return sample;
}

std::string index_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.pwt", index);
  return buf;
}

}  // namespace

std::string_view shape_name(std::size_t class_id) {
  if (class_id >= kShapeCount) throw ContractError("shape id out of range");
  return kShapes[class_id];
}

std::string_view texture_name(std::size_t bg_id) {
  if (bg_id >= kTextureCount) throw ContractError("texture id out of range");
  return kTextures[bg_id];
}

void GenConfig::validate() const {
  if (classes < 2 || classes > kShapeCount) {
    throw ConfigError("classes must lie in [2, " + std::to_string(kShapeCount) + "]");
  }
  if (textures < classes || textures > kTextureCount) {
    throw ConfigError("textures must lie in [classes, " + std::to_string(kTextureCount) + "]");
  }
  if (image_size < 8) throw ConfigError("image-size must be at least 8");
  if (train_per_class == 0 || eval_per_class == 0) throw ConfigError("per-class counts must be positive");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit(rho, "rho");
  unit(mask_coverage, "mask-coverage");
  unit(mask_corruption, "mask-corruption");
}

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kOriginal: return "original";
    case SplitTag::kMSame: return "m-same";
    case SplitTag::kMRand: return "m-rand";
  }
  return "train";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::kTrain;
  if (text == "original") return SplitTag::kOriginal;
  if (text == "m-same") return SplitTag::kMSame;
  if (text == "m-rand") return SplitTag::kMRand;
  throw IoError("unknown split tag '" + std::string(text) + "'");
}

Tensor render_texture(std::size_t bg_id, std::size_t size, Rng& rng) {
  if (bg_id >= kTextureCount) throw ContractError("texture id out of range");
  double lo[3], hi[3];
  for (std::size_t c = 0; c < 3; ++c) {
    lo[c] = rng.uniform(0.0, 0.45);
    hi[c] = rng.uniform(0.55, 1.0);
  }
  const double freq = rng.uniform(3.0, 6.0);
  const double phase = rng.uniform();
  const double phase2 = rng.uniform();
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ox = rng.uniform(), oy = rng.uniform();
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<float> out(size * size * 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
      double w = 0.0;
      switch (bg_id) {
        case 0: w = std::sin(two_pi * (freq * v + phase)) > 0; break;
        case 1: w = std::sin(two_pi * (freq * u + phase)) > 0; break;
        case 2:
          w = static_cast<int>(std::floor(freq * u + phase) + std::floor(freq * v + phase2)) % 2 != 0;
          break;
        case 3: w = std::sin(two_pi * (freq * (u + v) / std::numbers::sqrt2 + phase)) > 0; break;
        case 4: {
          const double dx = frac(freq * u + phase) - 0.5, dy = frac(freq * v + phase2) - 0.5;
          w = dx * dx + dy * dy < 0.09;
          break;
        }
        case 5: w = std::sin(two_pi * freq * std::hypot(u - ox, v - oy) + two_pi * phase) > 0; break;
        case 6: w = 0.5 + 0.5 * (std::cos(angle) * (u - 0.5) + std::sin(angle) * (v - 0.5)) * std::numbers::sqrt2; break;
        case 7: w = rng.uniform(); break;
        case 8: w = 0.5 + 0.5 * std::sin(two_pi * (freq * u + phase)) * std::sin(two_pi * (freq * v + phase2)); break;
        case 9: w = frac(freq * u + phase) < 0.2 || frac(freq * v + phase2) < 0.2; break;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        out[(y * size + x) * 3 + c] = static_cast<float>(lo[c] + (hi[c] - lo[c]) * w);
      }
    }
  }
  return Tensor({size, size, 3}, std::move(out));
}

Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset data;
  const std::size_t n_train = cfg.classes * cfg.train_per_class;
  const std::size_t n_pool = cfg.classes * cfg.eval_per_class;

  for (std::size_t i = 0; i < n_train; ++i) {
    Rng rng = Rng::derive(cfg.seed, kTrainStream + i);
    data.train.push_back(render_sample(i % cfg.classes, i, SplitTag::kTrain, cfg, rng));
  }
  for (std::size_t i = 0; i < n_pool; ++i) {
    Rng rng = Rng::derive(cfg.seed, kPoolStream + i);
    data.pool.push_back(render_sample(i % cfg.classes, n_train + i, SplitTag::kOriginal, cfg, rng));
  }
  for (auto& s : data.pool) s.masks = MaskPair::from_foreground(s.true_mask);

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  Rng coverage_rng = Rng::derive(cfg.seed, kCoverageStream);
  coverage_rng.shuffle(std::span<std::size_t>(order));
  const auto masked = static_cast<std::size_t>(std::lround(cfg.mask_coverage * static_cast<double>(n_train)));
  for (std::size_t k = 0; k < masked; ++k) {
    auto& s = data.train[order[k]];
    auto mask = s.true_mask.to_vector();
    if (cfg.mask_corruption > 0) {
      Rng corrupt = Rng::derive(cfg.seed, kCoverageStream + 1 + order[k]);
      flip_blocks(mask, cfg.image_size, cfg.mask_corruption, corrupt);
    }
    s.masks = MaskPair::from_foreground(Tensor(s.true_mask.shape(), std::move(mask)));
  }
  return data;
}

EvalSplits make_eval_splits(const std::vector<Sample>& pool, const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2) throw ConfigError("M-RAND needs at least two classes");
  EvalSplits splits;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& src = pool[i];
    if (src.label >= cfg.classes) throw ConfigError("pool label exceeds the configured class count");
    Rng rng = Rng::derive(seed, kSplitStream + i);
    const std::size_t other = static_cast<std::size_t>(rng.below(cfg.classes - 1));
    const std::size_t rand_bg = other < src.label ? other : other + 1;

    auto composite = [&](std::size_t bg_id, SplitTag tag) {
      const auto bg = render_texture(bg_id, cfg.image_size, rng);
      const auto x = src.image.data(), m = src.true_mask.data(), b = bg.data();
      std::vector<float> out(x.size());
      for (std::size_t p = 0; p < m.size(); ++p)
        for (std::size_t c = 0; c < 3; ++c) out[p * 3 + c] = m[p] * x[p * 3 + c] + (1.0f - m[p]) * b[p * 3 + c];
      Sample s = src;
      s.image = Tensor(src.image.shape(), std::move(out));
      s.bg_id = bg_id;
      s.split = tag;
      return s;
    };
    Sample original = src;
    original.split = SplitTag::kOriginal;
    splits.original.push_back(std::move(original));
    splits.m_same.push_back(composite(src.label, SplitTag::kMSame));
    splits.m_rand.push_back(composite(rand_bg, SplitTag::kMRand));
  }
  return splits;
}

double bg_gap(double acc_same, double acc_rand) { return acc_same - acc_rand; }

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "mask");
  std::ostringstream manifest;
  manifest << "# index\tlabel\tbg_id\tsplit\thas_mask\tinstance\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const bool has_mask = s.masks.present;
    manifest << i << '\t' << s.label << '\t' << s.bg_id << '\t' << to_string(s.split) << '\t' << (has_mask ? 1 : 0)
             << '\t' << s.instance << '\n';
    const NamedTensor img{"image", s.image};
    save_tensors(dir / "img" / index_name(i), std::span(&img, 1));
    if (has_mask) {
      const NamedTensor mask{"mask", s.masks.fg};
      save_tensors(dir / "mask" / index_name(i), std::span(&mask, 1));
    }
  }
  write_file(dir / "manifest.txt", manifest.str());
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  std::istringstream manifest(read_file(dir / "manifest.txt"));
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::size_t index = 0, label = 0, bg = 0, instance = 0;
    int has_mask = 0;
    std::string split;
    if (!(fields >> index >> label >> bg >> split >> has_mask >> instance)) {
      throw IoError((dir / "manifest.txt").string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    Sample s;
    s.label = label;
    s.bg_id = bg;
    s.split = parse_split_tag(split);
    s.instance = instance;
    s.image = find_tensor(load_tensors(dir / "img" / index_name(index)), "image");
    if (has_mask) {
      s.masks = MaskPair::from_foreground(find_tensor(load_tensors(dir / "mask" / index_name(index)), "mask"));
      if (s.split != SplitTag::kTrain) s.true_mask = s.masks.fg;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> select_split(const std::vector<Sample>& samples, SplitTag tag) {
  std::vector<Sample> out;
  std::ranges::copy_if(samples, std::back_inserter(out), [&](const Sample& s) { return s.split == tag; });
  return out;
}

}  // namespace partwise
