#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "partwise/synthdata.hpp"

using namespace partwise;
namespace fs = std::filesystem;

namespace {

GenConfig small(std::size_t per_class = 20) {
  GenConfig cfg;
  cfg.classes = 4;
  cfg.textures = 8;
  cfg.train_per_class = per_class;
  cfg.eval_per_class = 5;
  cfg.image_size = 16;
  cfg.seed = 11;
  return cfg;
}

std::size_t masked_count(const std::vector<Sample>& samples) {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.masks.present;
  return n;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("partwise_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("config validation") {
    auto cfg = small();
    CHECK_NOTHROW(cfg.validate());
    cfg.rho = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small();
    cfg.mask_coverage = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small();
    cfg.mask_corruption = 2;
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
    cfg = small();
    cfg.classes = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small();
    cfg.textures = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("rho = 1 ties every background to its class texture") {
    auto cfg = small();
    cfg.rho = 1.0;
    const auto data = generate_dataset(cfg);
    REQUIRE(data.train.size() == 80);
    for (const auto& s : data.train) CHECK(s.bg_id == s.label);
  }

  TEST_CASE("rho = 0.8 agreement frequency") {
    GenConfig cfg = small(2500);  // 10^4 samples
    cfg.image_size = 8;
    cfg.rho = 0.8;
    cfg.eval_per_class = 1;
    const auto data = generate_dataset(cfg);
    REQUIRE(data.train.size() == 10000);
    std::size_t agree = 0;
    for (const auto& s : data.train) {
      agree += s.bg_id == s.label;
      CHECK(s.bg_id < cfg.textures);
    }
    CHECK(std::abs(static_cast<double>(agree) / 1e4 - 0.8) <= 0.02);
  }

  TEST_CASE("mask coverage yields an exact count") {
    auto cfg = small(125);  // 500 samples
    cfg.image_size = 8;
    cfg.mask_coverage = 0.1;
    CHECK(masked_count(generate_dataset(cfg).train) == 50);
    cfg.mask_coverage = 0.0;
    CHECK(masked_count(generate_dataset(cfg).train) == 0);
    cfg.mask_coverage = 1.0;
    CHECK(masked_count(generate_dataset(cfg).train) == 500);
  }

  TEST_CASE("uncorrupted masks equal the rendered foreground support") {
    auto cfg = small(4);
    cfg.rho = 1.0;
    const auto data = generate_dataset(cfg);
    const std::size_t n = cfg.image_size * cfg.image_size;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const auto& s = data.train[i];
      REQUIRE(s.masks.present);
      CHECK(s.masks.fg.to_vector() == s.true_mask.to_vector());
      for (std::size_t p = 0; p < n; ++p) CHECK(s.masks.fg.at(p) + s.masks.bg.at(p) == 1.0f);

      // Replay the per-sample stream: background draw, six shape draws, then
      // the texture. Outside the support the image is the bare texture.
      Rng rng = Rng::derive(cfg.seed, i);
      (void)rng.bernoulli(cfg.rho);
      for (int k = 0; k < 6; ++k) (void)rng.uniform();
      const auto bg = render_texture(s.bg_id, cfg.image_size, rng);
      std::size_t support = 0;
      for (std::size_t p = 0; p < n; ++p) {
        bool differs = false;
        for (std::size_t c = 0; c < 3; ++c) differs |= s.image.at(p * 3 + c) != bg.at(p * 3 + c);
        if (s.true_mask.at(p) == 0.0f) CHECK_FALSE(differs);
        support += s.true_mask.at(p) == 1.0f;
      }
      CHECK(support > 0);
    }
  }

  TEST_CASE("corruption flips an exact fraction of mask pixels") {
    auto cfg = small(5);
    cfg.mask_corruption = 0.25;
    const auto data = generate_dataset(cfg);
    const std::size_t n = cfg.image_size * cfg.image_size;
    for (const auto& s : data.train) {
      std::size_t flipped = 0;
      for (std::size_t p = 0; p < n; ++p) flipped += s.masks.fg.at(p) != s.true_mask.at(p);
      CHECK(flipped == 64);
      for (std::size_t p = 0; p < n; ++p) CHECK(s.masks.fg.at(p) + s.masks.bg.at(p) == 1.0f);
    }
  }

  TEST_CASE("corruption flips contiguous blocks") {
    auto cfg = small(2);
    cfg.mask_corruption = 0.05;  // 13 pixels, blocks of 2 x 2
    for (const auto& s : generate_dataset(cfg).train) {
      const std::size_t size = cfg.image_size;
      std::size_t isolated = 0;
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          auto flipped = [&](std::size_t yy, std::size_t xx) {
            return s.masks.fg.at(yy * size + xx) != s.true_mask.at(yy * size + xx);
          };
          if (!flipped(y, x)) continue;
          bool neighbour = false;
          if (x > 0) neighbour |= flipped(y, x - 1);
          if (x + 1 < size) neighbour |= flipped(y, x + 1);
          if (y > 0) neighbour |= flipped(y - 1, x);
          if (y + 1 < size) neighbour |= flipped(y + 1, x);
          isolated += !neighbour;
        }
      // Only the budget's final remainder can land alone.
      CHECK(isolated <= 1);
    }
  }

  TEST_CASE("held-out instances are disjoint from training") {
    const auto data = generate_dataset(small());
    std::set<std::size_t> train_ids;
    for (const auto& s : data.train) train_ids.insert(s.instance);
    CHECK(train_ids.size() == data.train.size());
    for (const auto& s : data.pool) {
      CHECK(train_ids.count(s.instance) == 0);
      CHECK(s.masks.present);
    }
  }

  TEST_CASE("generation is deterministic and seed-sensitive") {
    const auto a = generate_dataset(small()), b = generate_dataset(small());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].image.to_vector() == b.train[i].image.to_vector());
      CHECK(a.train[i].bg_id == b.train[i].bg_id);
    }
    auto other = small();
    other.seed = 12;
    CHECK(generate_dataset(other).train[0].image.to_vector() != a.train[0].image.to_vector());
  }

  TEST_CASE("eval splits share foregrounds and labels") {
    const auto cfg = small();
    const auto data = generate_dataset(cfg);
    const auto splits = make_eval_splits(data.pool, cfg, 5);
    REQUIRE(splits.original.size() == data.pool.size());
    for (std::size_t i = 0; i < data.pool.size(); ++i) {
      const auto& o = splits.original[i];
      const auto& same = splits.m_same[i];
      const auto& rand = splits.m_rand[i];
      CHECK(o.image.to_vector() == data.pool[i].image.to_vector());
      CHECK(same.label == o.label);
      CHECK(rand.label == o.label);
      CHECK(same.bg_id == o.label);
      CHECK(rand.bg_id != o.label);
      CHECK(rand.bg_id < cfg.classes);
      CHECK(same.split == SplitTag::kMSame);
      for (std::size_t p = 0; p < o.true_mask.numel(); ++p) {
        if (o.true_mask.at(p) != 1.0f) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          CHECK(same.image.at(p * 3 + c) == o.image.at(p * 3 + c));
          CHECK(rand.image.at(p * 3 + c) == o.image.at(p * 3 + c));
        }
      }
    }
  }

  TEST_CASE("two-class pool: every reassignment lies in the admissible set") {
    GenConfig cfg = small();
    cfg.classes = 2;
    cfg.textures = 2;
    cfg.eval_per_class = 2;
    const auto data = generate_dataset(cfg);
    REQUIRE(data.pool.size() == 4);
    // Enumerate (m-same, m-rand) background pairs allowed for each label.
    std::set<std::pair<std::size_t, std::size_t>> admissible[2];
    for (std::size_t label = 0; label < 2; ++label)
      for (std::size_t same = 0; same < cfg.textures; ++same)
        for (std::size_t rand = 0; rand < cfg.classes; ++rand)
          if (same == label && rand != label) admissible[label].insert({same, rand});
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto splits = make_eval_splits(data.pool, cfg, seed);
      for (std::size_t i = 0; i < 4; ++i) {
        const auto label = data.pool[i].label;
        CHECK(admissible[label].count({splits.m_same[i].bg_id, splits.m_rand[i].bg_id}) == 1);
      }
    }
    cfg.classes = 1;
    CHECK_THROWS_AS(make_eval_splits(data.pool, cfg, 0), ConfigError);
  }

  TEST_CASE("bg_gap values") {
    CHECK(bg_gap(80.0, 80.0) == 0.0);
    CHECK(bg_gap(93.4, 87.5) == doctest::Approx(5.9).epsilon(1e-9));
    CHECK(bg_gap(90.6, 78.0) == doctest::Approx(12.6).epsilon(1e-9));
  }

  TEST_CASE("textures stay in the unit range") {
    Rng rng(3);
    for (std::size_t t = 0; t < kTextureCount; ++t) {
      const auto tex = render_texture(t, 12, rng);
      for (float v : tex.to_vector()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
    CHECK_THROWS_AS(render_texture(kTextureCount, 8, rng), ContractError);
  }

  TEST_CASE("dataset directory round-trips and is byte-stable") {
    auto cfg = small(3);
    cfg.mask_coverage = 0.5;
    const auto data = generate_dataset(cfg);
    const auto splits = make_eval_splits(data.pool, cfg, 1);
    std::vector<Sample> all = data.train;
    all.insert(all.end(), splits.m_rand.begin(), splits.m_rand.end());

    const auto a = scratch_dir("a"), b = scratch_dir("b");
    write_dataset(a, all);
    write_dataset(b, all);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      CHECK(slurp(entry.path()) == slurp(b / fs::relative(entry.path(), a)));
    }

    const auto back = read_dataset(a);
    REQUIRE(back.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      CHECK(back[i].label == all[i].label);
      CHECK(back[i].bg_id == all[i].bg_id);
      CHECK(back[i].split == all[i].split);
      CHECK(back[i].instance == all[i].instance);
      CHECK(back[i].masks.present == all[i].masks.present);
      CHECK(back[i].image.to_vector() == all[i].image.to_vector());
      if (all[i].masks.present) CHECK(back[i].masks.fg.to_vector() == all[i].masks.fg.to_vector());
    }
    CHECK(select_split(back, SplitTag::kMRand).size() == splits.m_rand.size());
    CHECK(select_split(back, SplitTag::kOriginal).empty());

    const auto manifest = slurp(a / "manifest.txt");
    CHECK(manifest.starts_with("# index\tlabel\tbg_id\tsplit\thas_mask\tinstance\n"));
    CHECK_THROWS_AS(read_dataset(scratch_dir("missing")), IoError);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("split tags parse and print") {
    for (auto tag : {SplitTag::kTrain, SplitTag::kOriginal, SplitTag::kMSame, SplitTag::kMRand}) {
      CHECK(parse_split_tag(to_string(tag)) == tag);
    }
    CHECK_THROWS(parse_split_tag("validation"));
  }
}
