#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "partwise/checkpoint.hpp"
#include "partwise/cli.hpp"

using namespace partwise;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("partwise_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const std::vector<std::string> kData = {"--classes", "4", "--train-per-class", "6", "--eval-per-class", "5",
                                        "--image-size", "16", "--seed", "3"};
const std::vector<std::string> kModel = {"--image-size", "16", "--patch-size", "4", "--model-dim", "16",
                                         "--heads", "2", "--parts", "6", "--fg-parts", "4", "--out-dim", "16",
                                         "--batch-size", "2", "--seed", "3", "--log-every", "1000"};

/// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

std::vector<std::map<std::string, std::string>> read_tsv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    for (std::string f; std::getline(h, f, '\t');) header.push_back(f);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::istringstream r(line);
    std::map<std::string, std::string> row;
    std::size_t i = 0;
    for (std::string f; std::getline(r, f, '\t') && i < header.size(); ++i) row[header[i]] = f;
    rows.push_back(row);
  }
  return rows;
}

/// Shared dataset for the commands that consume one.
const fs::path& shared_data() {
  static const fs::path dir = [] {
    const auto d = scratch("shared_data");
    const auto r = cli(concat({"gen-data", "--data", d.string()}, kData));
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown keys and bad values exit with code 2") {
    CHECK(cli({"gen-data", "--no-such-key", "1"}).code == 2);
    CHECK(cli({"bogus"}).code == 2);
    CHECK(cli({}).code == 2);
    const auto dir = scratch("badrho");
    CHECK(cli({"gen-data", "--data", dir.string(), "--rho", "1.5"}).code == 2);

    const auto cfg = scratch("badcfg");
    fs::create_directories(cfg);
    write_file(cfg / "run.txt", "rho = 0.5\nwidth = 3\n");
    const auto r = cli({"gen-data", "--config", (cfg / "run.txt").string(), "--data", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("width") != std::string::npos);
    RunConfig rc;
    CHECK_THROWS_AS(rc.set("width", "3"), ConfigError);
  }

  TEST_CASE("help prints usage and succeeds") {
    const auto r = cli({"pretrain", "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--lambda-mix") != std::string::npos);
  }

  TEST_CASE("gen-data writes the documented layout and counts") {
    const auto dir = shared_data();
    CHECK(fs::exists(dir / "manifest.txt"));
    CHECK(fs::exists(dir / "config.txt"));
    std::size_t images = 0, masks = 0;
    for (const auto& e : fs::directory_iterator(dir / "img")) images += e.is_regular_file();
    for (const auto& e : fs::directory_iterator(dir / "mask")) masks += e.is_regular_file();
    CHECK(images == 24 + 3 * 20);
    CHECK(masks == images);
    const auto samples = read_dataset(dir);
    CHECK(select_split(samples, SplitTag::kTrain).size() == 24);
    CHECK(select_split(samples, SplitTag::kMSame).size() == 20);
  }

  TEST_CASE("gen-data refuses a non-empty directory without --force") {
    const auto dir = scratch("refuse");
    REQUIRE(cli(concat({"gen-data", "--data", dir.string()}, kData)).code == 0);
    CHECK(cli(concat({"gen-data", "--data", dir.string()}, kData)).code == 4);
    CHECK(cli(concat({"gen-data", "--data", dir.string(), "--force"}, kData)).code == 0);
    fs::remove_all(dir);
  }

  TEST_CASE("gen-data is byte-reproducible and the resolved config replays it") {
    const auto a = scratch("gen_a"), c = scratch("gen_c");
    REQUIRE(cli(concat({"gen-data", "--data", a.string(), "--force"}, kData)).code == 0);
    const auto first = snapshot(a);
    REQUIRE(cli(concat({"gen-data", "--data", a.string(), "--force"}, kData)).code == 0);
    CHECK(snapshot(a) == first);

    // Feed the echoed config back verbatim, pointing only the data path elsewhere.
    REQUIRE(cli({"gen-data", "--config", (a / "config.txt").string(), "--data", c.string()}).code == 0);
    auto sa = snapshot(a), sc = snapshot(c);
    sa.erase("config.txt");
    sc.erase("config.txt");
    CHECK(sa == sc);
    fs::remove_all(a);
    fs::remove_all(c);
  }

  TEST_CASE("--rho 1.0 gives perfect class-texture agreement") {
    const auto dir = scratch("rho1");
    const auto r = cli(concat(concat({"gen-data", "--data", dir.string()}, kData), {"--rho", "1.0"}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("class-texture agreement\t1.0000") != std::string::npos);
    for (const auto& s : select_split(read_dataset(dir), SplitTag::kTrain)) CHECK(s.bg_id == s.label);
    fs::remove_all(dir);
  }

  TEST_CASE("PARTWISE_SEED overrides the configured seed") {
    const auto dir = scratch("env");
    ::setenv("PARTWISE_SEED", "99", 1);
    const auto r = cli(concat({"gen-data", "--data", dir.string(), "--force"}, kData));
    ::unsetenv("PARTWISE_SEED");
    REQUIRE(r.code == 0);
    const auto via_env = snapshot(dir);
    CHECK(via_env.at("config.txt").find("seed = 99\n") != std::string::npos);
    REQUIRE(cli(concat(concat({"gen-data", "--data", dir.string(), "--force"}, kData), {"--seed", "99"})).code == 0);
    CHECK(snapshot(dir) == via_env);
    fs::remove_all(dir);
  }

  TEST_CASE("zero steps writes the initialization checkpoint") {
    const auto out = scratch("steps0");
    const auto args = concat({"pretrain", "--data", shared_data().string(), "--out", out.string(), "--steps", "0"}, kModel);
    REQUIRE(cli(args).code == 0);
    RunConfig rc;
    for (std::size_t i = 1; i + 1 < args.size(); i += 2) {
      if (args[i] != "--data" && args[i] != "--out") rc.set(args[i].substr(2), args[i + 1]);
    }
    Rng rng(rc.u64("seed"));
    const auto pair = StudentTeacher<float>::init(rc.encoder(), rc.distill(), rng);
    CHECK(read_file(out / "checkpoint.pwt") == encode_tensors(export_checkpoint(pair)));
    CHECK(read_tsv(out / "metrics.tsv").empty());
    fs::remove_all(out);
  }

  TEST_CASE("disabled loss terms log exactly zero") {
    const auto out = scratch("zero_terms");
    const auto r = cli(concat({"pretrain", "--data", shared_data().string(), "--out", out.string(), "--steps", "5",
                               "--lambda-mix", "0", "--lambda-s", "0", "--lambda-o", "0"},
                              kModel));
    REQUIRE(r.code == 0);
    const auto rows = read_tsv(out / "metrics.tsv");
    REQUIRE(rows.size() == 5);
    for (const auto& row : rows) {
      CHECK(row.at("mix") == "0");
      CHECK(row.at("sparse") == "0");
      CHECK(row.at("ortho") == "0");
      CHECK(row.at("cls") != "0");
    }
    fs::remove_all(out);
  }

  TEST_CASE("orthogonality pressure lowers the foreground Gram residual over 200 steps") {
    const auto out = scratch("ortho200");
    const auto r = cli(concat({"pretrain", "--data", shared_data().string(), "--out", out.string(), "--steps", "200",
                               "--image-size", "16", "--patch-size", "4", "--model-dim", "8", "--heads", "2",
                               "--blocks", "1", "--lr", "1e-3"},
                              {"--parts", "6", "--fg-parts", "4", "--out-dim", "8", "--batch-size", "1", "--seed", "3",
                               "--log-every", "1000"}));
    REQUIRE(r.code == 0);
    const auto rows = read_tsv(out / "metrics.tsv");
    REQUIRE(rows.size() == 200);
    CHECK(std::stod(rows.back().at("fg_gram_l1")) < std::stod(rows.front().at("fg_gram_l1")));
    fs::remove_all(out);
  }

  TEST_CASE("training and evaluation commands") {
    const auto data = shared_data();
    const auto pre = scratch("pre"), fine = scratch("fine");
    const auto base = concat({"--data", data.string(), "--steps", "3"}, kModel);
    REQUIRE(cli(concat({"pretrain", "--out", pre.string(), "--force"}, base)).code == 0);
    const auto first = snapshot(pre);
    REQUIRE(cli(concat({"pretrain", "--out", pre.string(), "--force"}, base)).code == 0);
    CHECK(snapshot(pre) == first);
    const auto ckpt = (pre / "checkpoint.pwt").string();

    SUBCASE("finetune needs a checkpoint and accepts one") {
      CHECK(cli(concat({"finetune", "--out", fine.string()}, base)).code == 2);
      CHECK(cli(concat({"finetune", "--out", fine.string(), "--checkpoint", "/no/such.pwt"}, base)).code != 0);
      REQUIRE(cli(concat({"finetune", "--out", fine.string(), "--checkpoint", ckpt}, base)).code == 0);
      const auto rows = read_tsv(fine / "metrics.tsv");
      REQUIRE(rows.size() == 3);
      CHECK(rows[0].at("phase") == "finetune");
      CHECK(rows[0].at("mix") == "0");
      CHECK(rows[0].at("cls_inv") != "0");
    }

    SUBCASE("eval-fewshot is deterministic and records the checkpoint id") {
      const auto e1 = scratch("eval1");
      const auto args = concat({"eval-fewshot", "--checkpoint", ckpt, "--episodes", "20", "--shot", "1", "--queries",
                                "3", "--data", data.string()},
                               kModel);
      const auto r1 = cli(concat(args, {"--out", e1.string(), "--force"}));
      REQUIRE(r1.code == 0);
      const auto first_eval = snapshot(e1);
      REQUIRE(cli(concat(args, {"--out", e1.string(), "--force"})).code == 0);
      CHECK(snapshot(e1) == first_eval);
      const auto rows = read_tsv(e1 / "results.tsv");
      REQUIRE(rows.size() == 1);
      CHECK(rows[0].at("way") == "4");
      CHECK(rows[0].at("episodes") == "20");
      CHECK(rows[0].at("metric") == "euclidean");
      char id[17];
      std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(ckpt))));
      CHECK(rows[0].at("checkpoint") == id);
      const double mean = std::stod(rows[0].at("mean"));
      CHECK(mean >= 0.0);
      CHECK(mean <= 100.0);
      CHECK(cli(concat(args, {"--out", scratch("eval3").string(), "--checkpoint", "/no/such.pwt"})).code == 4);
    }

    SUBCASE("inspect writes 2 + 2 * heads + parts maps") {
      const auto dir = scratch("inspect");
      const auto r = cli(concat({"inspect", "--checkpoint", ckpt, "--out", dir.string(), "--index", "2"}, base));
      REQUIRE(r.code == 0);
      std::size_t pgm = 0;
      for (const auto& e : fs::directory_iterator(dir)) pgm += e.path().extension() == ".pgm";
      CHECK(pgm == 2 + 2 * 2 + 6);
      const auto lf = read_file(dir / "lf.pgm");
      CHECK(lf.starts_with("P5\n16 16\n255\n"));
      CHECK(lf.size() == std::string("P5\n16 16\n255\n").size() + 256);
      CHECK(read_file(dir / "part0.pgm").starts_with("P5\n4 4\n255\n"));
      CHECK(cli(concat({"inspect", "--checkpoint", ckpt, "--out", scratch("inspect_bad").string(), "--index", "999"},
                       base))
                .code == 2);
    }

    SUBCASE("a constant latent code renders as a constant image") {
      RunConfig rc;
      for (std::size_t i = 0; i + 1 < kModel.size(); i += 2) rc.set(kModel[i].substr(2), kModel[i + 1]);
      Rng rng(0);
      auto pair = StudentTeacher<float>::init(rc.encoder(), rc.distill(), rng);
      import_checkpoint(pair, load_tensors(ckpt));
      for (auto& a : pair.teacher.encoder.blocks.back().parts.alpha.mutable_data()) a = 0.0f;
      const auto flat = scratch("flat_ckpt");
      fs::create_directories(flat);
      save_tensors(flat / "c.pwt", export_checkpoint(pair));
      const auto dir = scratch("inspect_flat");
      REQUIRE(cli(concat({"inspect", "--checkpoint", (flat / "c.pwt").string(), "--out", dir.string()}, base)).code == 0);
      const auto lf = read_file(dir / "lf.pgm");
      const std::string header = "P5\n16 16\n255\n";
      const auto pixels = lf.substr(header.size());
      CHECK(pixels == std::string(256, '\0'));
    }

    SUBCASE("eval-splits on identical splits reports a zero gap") {
      const auto sup = scratch("sup");
      const auto sup_args = concat(base, {"--supervised"});
      REQUIRE(cli(concat({"pretrain", "--out", sup.string()}, sup_args)).code == 0);
      auto samples = read_dataset(data);
      std::vector<Sample> copied;
      for (const auto& s : select_split(samples, SplitTag::kOriginal)) {
        for (auto tag : {SplitTag::kOriginal, SplitTag::kMSame, SplitTag::kMRand}) {
          Sample c = s;
          c.split = tag;
          copied.push_back(c);
        }
      }
      const auto same_dir = scratch("same_splits");
      write_dataset(same_dir, copied);
      const auto out = scratch("splits_out");
      const auto r = cli(concat({"eval-splits", "--checkpoint", (sup / "checkpoint.pwt").string(), "--out",
                                 out.string()},
                                concat(sup_args, {"--data", same_dir.string()})));
      REQUIRE(r.code == 0);
      CHECK(r.out.find("bg-gap\t0.00\t") != std::string::npos);
      // Without a logit head the split protocol is a configuration error.
      CHECK(cli(concat({"eval-splits", "--checkpoint", ckpt, "--out", scratch("splits_bad").string()},
                       concat(base, {"--data", same_dir.string()})))
                .code == 2);
    }
  }

  TEST_CASE("an untrained model scores near chance on 4-way episodes") {
    const auto root = scratch("chance");
    const auto data = (root / "data").string(), pre = (root / "pre").string();
    REQUIRE(cli({"gen-data", "--data", data, "--classes", "4", "--train-per-class", "2", "--eval-per-class", "30",
                 "--image-size", "16", "--seed", "3"})
                .code == 0);
    REQUIRE(cli(concat({"pretrain", "--data", data, "--out", pre, "--steps", "0"}, kModel)).code == 0);
    const auto r = cli(concat({"eval-fewshot", "--data", data, "--out", (root / "eval").string(), "--checkpoint",
                               pre + "/checkpoint.pwt", "--episodes", "200"},
                              kModel));
    REQUIRE(r.code == 0);
    const auto rows = read_tsv(root / "eval" / "results.tsv");
    CHECK(std::abs(std::stod(rows.at(0).at("mean")) - 25.0) <= 5.0);
    fs::remove_all(root);
  }

  TEST_CASE("resolved config renders every key") {
    RunConfig rc;
    const auto text = rc.render();
    for (const auto& [key, help] : RunConfig::schema()) CHECK(text.find(key + " = ") != std::string::npos);
    CHECK(rc.flag("supervised") == false);
    CHECK(rc.distill().classes == 0);
    rc.set("supervised", "true");
    CHECK(rc.distill().classes == 4);
    rc.set("steps", "-3");
    CHECK_THROWS_AS(static_cast<void>(rc.count("steps")), ConfigError);
  }
}
