#include "partwise/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "partwise/checkpoint.hpp"

namespace partwise {

namespace {

struct KeySpec {
  const char* key;
  const char* fallback;
  const char* help;
};

// clang-format off
constexpr KeySpec kKeys[] = {
    // paths and run control
    {"data", "data", "dataset directory"},
    {"out", "partwise-out", "output directory"},
    {"checkpoint", "", "checkpoint file to load"},
    {"force", "false", "overwrite a non-empty output directory"},
    {"seed", "0", "master seed (PARTWISE_SEED overrides)"},
    {"log-every", "1", "print every n-th metrics row to stdout (the file gets all)"},
    // dataset
    {"classes", "4", "foreground shape classes"},
    {"textures", "8", "background textures"},
    {"train-per-class", "500", "training samples per class"},
    {"eval-per-class", "100", "held-out samples per class and split"},
    {"image-size", "32", "square image side"},
    {"rho", "0.95", "probability that a background is the class-assigned texture"},
    {"mask-coverage", "1.0", "fraction of training samples with masks"},
    {"mask-corruption", "0.0", "fraction of mask pixels flipped in blocks"},
    // encoder
    {"patch-size", "8", "patch side"},
    {"blocks", "2", "encoder blocks"},
    {"heads", "4", "attention heads"},
    {"model-dim", "64", "token width"},
    {"parts", "16", "parts per block"},
    {"fg-parts", "10", "foreground parts per block"},
    {"mlp-ratio", "4", "MLP hidden width / model dim"},
    {"upsampler-hidden", "0", "cross-attention upsampler width (0 = patch dim)"},
    // heads and distillation
    {"out-dim", "64", "projection head output dimension"},
    {"head-hidden", "0", "projection head hidden width (0 = 2 * model dim)"},
    {"supervised", "false", "add a logit head trained with label cross-entropy"},
    {"student-temp", "0.1", "student softmax temperature"},
    {"teacher-temp", "0.04", "teacher softmax temperature"},
    {"center-momentum", "0.9", "teacher center momentum"},
    {"ema-momentum", "0.996", "teacher EMA momentum"},
    {"latent-temp", "1.0", "position softmax temperature for the latent-code invariance loss"},
    {"power-iters", "2", "power iterations for the spectral norm"},
    {"noise", "gaussian", "latent code noise: none|gaussian|salt-pepper|speckle"},
    {"mix-norm", "l2", "mask alignment norm: l2|l2sq|l1|cosine"},
    // loss weights
    {"lambda-cls", "1.0", "cls distillation weight"},
    {"lambda-mix", "1.0", "mask alignment weight"},
    {"lambda-s", "0.5", "part sparsity weight"},
    {"lambda-o", "0.5", "part orthogonality weight"},
    {"lambda-cls-inv", "1.0", "foreground-invariant cls weight"},
    {"lambda-p-inv", "0.5", "foreground-invariant latent code weight"},
    {"lambda-sup", "1.0", "label cross-entropy weight (with supervised)"},
    // optimization
    {"steps", "1000", "training steps"},
    {"batch-size", "8", "samples per step"},
    {"lr", "5e-4", "base learning rate"},
    {"final-lr", "1e-5", "learning rate at the end of the cosine decay"},
    {"warmup-steps", "0", "linear warmup steps"},
    {"weight-decay", "0.04", "decoupled weight decay"},
    {"min-scale", "0.4", "minimum crop area fraction"},
    {"flip-prob", "0.5", "horizontal flip probability"},
    {"jitter", "0.2", "per-channel gain jitter"},
    // evaluation
    {"split", "original", "evaluation split: train|original|m-same|m-rand"},
    {"way", "4", "classes per episode"},
    {"shot", "1", "support samples per class"},
    {"queries", "15", "query samples per class"},
    {"episodes", "600", "episodes"},
    {"metric", "euclidean", "prototype distance: euclidean|cosine"},
    {"attention-pool", "false", "append attention-pooled patch tokens to the cls feature"},
    {"index", "0", "sample index within the split (inspect)"},
};
// clang-format on

constexpr const char* kBoolKeys[] = {"force", "supervised", "attention-pool"};

bool is_bool_key(const std::string& key) {
  return std::ranges::any_of(kBoolKeys, [&](const char* k) { return key == k; });
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void prepare_output(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw IoError(dir.string() + " is not empty (pass --force to overwrite)");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t h, std::size_t w) {
  const auto [lo, hi] = std::ranges::minmax(values);
  std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (float v : values) {
    const double t = hi > lo ? (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo) : 0.0;
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  write_file(path, bytes);
}

/// Samples of `split`, failing on an empty selection.
std::vector<Sample> load_split(const RunConfig& cfg, SplitTag tag) {
  auto samples = select_split(read_dataset(cfg.get("data")), tag);
  if (samples.empty()) throw ConfigError("dataset has no '" + std::string(to_string(tag)) + "' samples");
  return samples;
}

StudentTeacher<float> load_pair(const RunConfig& cfg) {
  if (cfg.get("checkpoint").empty()) throw ConfigError("--checkpoint is required");
  Rng rng(cfg.u64("seed"));
  auto pair = StudentTeacher<float>::init(cfg.encoder(), cfg.distill(), rng);
  import_checkpoint(pair, load_tensors(cfg.get("checkpoint")));
  return pair;
}

std::string checkpoint_id(const RunConfig& cfg) { return hex64(fnv1a64(read_file(cfg.get("checkpoint")))); }

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  const auto gen = cfg.gen();
  const std::filesystem::path dir = cfg.get("data");
  prepare_output(dir, cfg.flag("force"));
  const auto data = generate_dataset(gen);
  const auto splits = make_eval_splits(data.pool, gen, gen.seed);
  std::vector<Sample> all = data.train;
  for (const auto* part : {&splits.original, &splits.m_same, &splits.m_rand}) all.insert(all.end(), part->begin(), part->end());
  write_dataset(dir, all);
  write_file(dir / "config.txt", cfg.render());

  std::size_t masked = 0, agree = 0;
  for (const auto& s : data.train) {
    masked += s.masks.present;
    agree += s.bg_id == s.label;
  }
  out << "wrote " << all.size() << " samples to " << dir.string() << "\n"
      << "train\t" << data.train.size() << "\tmasked\t" << masked << "\tclass-texture agreement\t"
      << fixed(static_cast<double>(agree) / static_cast<double>(data.train.size()), 4) << "\n"
      << "original\t" << splits.original.size() << "\nm-same\t" << splits.m_same.size() << "\nm-rand\t"
      << splits.m_rand.size() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, Phase phase, std::ostream& out) {
  const std::filesystem::path dir = cfg.get("out");
  const auto enc = cfg.encoder();
  const auto dcfg = cfg.distill();
  const auto aug = cfg.augment();
  const std::size_t steps = cfg.count("steps");
  const std::size_t batch_size = cfg.count("batch-size");
  if (batch_size == 0) throw ConfigError("batch-size must be positive");
  if (phase == Phase::kFinetune && cfg.get("checkpoint").empty()) {
    throw ConfigError("finetune requires --checkpoint from a pretraining run");
  }
  const auto train = load_split(cfg, SplitTag::kTrain);
  for (const auto& s : train) {
    if (s.image.shape() != Shape{enc.image_size, enc.image_size, enc.channels}) {
      throw ConfigError("dataset images are " + shape_string(s.image.shape()) + ", encoder expects image-size " +
                        std::to_string(enc.image_size));
    }
  }

  const std::uint64_t seed = cfg.u64("seed");
  TrainState state{enc,
                   dcfg,
                   cfg.weights(),
                   Schedule{cfg.real("lr"), cfg.real("final-lr"), cfg.count("warmup-steps"), std::max<std::size_t>(steps, 1)},
                   {},
                   AdamW(0.9, 0.999, 1e-8, cfg.real("weight-decay")),
                   Rng(seed),
                   0};
  state.weights.validate();
  state.pair = StudentTeacher<float>::init(enc, dcfg, state.rng);
  if (phase == Phase::kFinetune) import_checkpoint(state.pair, load_tensors(cfg.get("checkpoint")));

  prepare_output(dir, cfg.flag("force"));
  write_file(dir / "config.txt", cfg.render());
  std::ofstream metrics(dir / "metrics.tsv", std::ios::binary);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.tsv").string());
  metrics << metrics_header() << "\n";
  out << metrics_header() << "\n";

  const std::size_t log_every = std::max<std::size_t>(1, cfg.count("log-every"));
  Rng data_rng = Rng::derive(seed, 0xDA7A);
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < steps; ++step) {
    Batch batch;
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        data_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const auto& s = train[order[cursor++]];
      auto [v1, m1] = augment(s.image, s.masks, aug, data_rng);
      auto [v2, m2] = augment(s.image, s.masks, aug, data_rng);
      TrainSample sample{std::move(v1), std::move(v2), std::move(m1), std::move(m2), std::nullopt};
      if (dcfg.classes > 0) sample.label = s.label;
      batch.push_back(std::move(sample));
    }
    const auto m = train_step(state, batch, phase);
    const auto row = metrics_row(m);
    metrics << row << "\n";
    if (step % log_every == 0 || step + 1 == steps) out << row << "\n";
  }
  metrics.close();
  save_tensors(dir / "checkpoint.pwt", export_checkpoint(state.pair));
  out << "checkpoint\t" << (dir / "checkpoint.pwt").string() << "\n";
  return 0;
}

int cmd_eval_fewshot(const RunConfig& cfg, std::ostream& out) {
  const auto enc = cfg.encoder();
  const auto pair = load_pair(cfg);
  const auto samples = load_split(cfg, parse_split_tag(cfg.get("split")));
  const auto features = extract_features(pair.teacher, samples, enc, cfg.flag("attention-pool"));
  std::vector<std::size_t> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  Rng rng = Rng::derive(cfg.u64("seed"), 0xE7A1);
  const auto metric = parse_metric(cfg.get("metric"));
  const auto acc = evaluate(features, labels, cfg.count("way"), cfg.count("shot"), cfg.count("queries"),
                            cfg.count("episodes"), rng, metric);

  std::ostringstream record;
  record << "way\tshot\tepisodes\tmean\tci\tmetric\tcheckpoint\n"
         << cfg.get("way") << '\t' << cfg.get("shot") << '\t' << acc.episodes << '\t' << fixed(acc.mean) << '\t'
         << fixed(acc.ci) << '\t' << to_string(metric) << '\t' << checkpoint_id(cfg) << "\n";
  const std::filesystem::path dir = cfg.get("out");
  prepare_output(dir, cfg.flag("force"));
  write_file(dir / "config.txt", cfg.render());
  write_file(dir / "results.tsv", record.str());
  out << record.str() << cfg.get("way") << "-way " << cfg.get("shot") << "-shot: " << fixed(acc.mean) << " +- "
      << fixed(acc.ci) << "\n";
  return 0;
}

int cmd_eval_splits(const RunConfig& cfg, std::ostream& out) {
  const auto enc = cfg.encoder();
  const auto pair = load_pair(cfg);
  const auto all = read_dataset(cfg.get("data"));
  std::ostringstream record;
  record << "split\taccuracy\tcheckpoint\n";
  double acc[3] = {};
  const SplitTag tags[3] = {SplitTag::kOriginal, SplitTag::kMSame, SplitTag::kMRand};
  const auto id = checkpoint_id(cfg);
  for (int i = 0; i < 3; ++i) {
    const auto samples = select_split(all, tags[i]);
    if (samples.empty()) throw ConfigError("dataset has no '" + std::string(to_string(tags[i])) + "' samples");
    acc[i] = classification_accuracy(pair.teacher, samples, enc);
    record << to_string(tags[i]) << '\t' << fixed(acc[i]) << '\t' << id << "\n";
  }
  record << "bg-gap\t" << fixed(bg_gap(acc[1], acc[2])) << '\t' << id << "\n";
  const std::filesystem::path dir = cfg.get("out");
  prepare_output(dir, cfg.flag("force"));
  write_file(dir / "config.txt", cfg.render());
  write_file(dir / "results.tsv", record.str());
  out << record.str();
  return 0;
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out) {
  const auto enc = cfg.encoder();
  const auto pair = load_pair(cfg);
  const auto samples = load_split(cfg, parse_split_tag(cfg.get("split")));
  const std::size_t index = cfg.count("index");
  if (index >= samples.size()) {
    throw ConfigError("index " + std::to_string(index) + " out of range for " + std::to_string(samples.size()) +
                      " samples");
  }
  NoGradGuard no_grad;
  Rng unused(0);
  const auto result = forward(pair.teacher, samples[index].image, enc, unused, NoiseKind::kNone);
  const std::size_t g = enc.grid(), size = enc.image_size, n = enc.num_patches();

  const std::filesystem::path dir = cfg.get("out");
  prepare_output(dir, cfg.flag("force"));
  write_file(dir / "config.txt", cfg.render());
  std::size_t files = 0;
  auto emit = [&](const std::string& name, std::span<const float> values, std::size_t h, std::size_t w) {
    write_pgm(dir / (name + ".pgm"), values, h, w);
    ++files;
  };
  emit("lf", interpolate(result.codes.fg, g, g, size, size).data(), size, size);
  emit("lb", interpolate(result.codes.bg, g, g, size, size).data(), size, size);
  auto cls_row = [&](const Tensor& attention) {
    const auto row = attention.data().subspan(0, attention.dim(1));
    return std::vector<float>(row.begin() + 1, row.end());
  };
  for (std::size_t h = 0; h < result.features.msa_attention.size(); ++h) {
    emit("msa_head" + std::to_string(h), cls_row(result.features.msa_attention[h]), g, g);
  }
  for (std::size_t h = 0; h < result.features.mca_attention.size(); ++h) {
    emit("mca_head" + std::to_string(h), cls_row(result.features.mca_attention[h]), g, g);
  }
  const auto& maps = result.features.last_maps.values;
  for (std::size_t k = 0; k < maps.dim(1); ++k) {
    std::vector<float> column(n);
    for (std::size_t i = 0; i < n; ++i) column[i] = maps.at(i, k);
    emit("part" + std::to_string(k), column, g, g);
  }
  out << "wrote " << files << " maps to " << dir.string() << "\n";
  return 0;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

const std::vector<std::pair<std::string, std::string>>& RunConfig::schema() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : kKeys) out.emplace_back(k.key, k.help);
    return out;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string RunConfig::render() const {
  std::ostringstream os;
  for (const auto& k : kKeys) os << k.key << " = " << values_.at(k.key) << "\n";
  return os.str();
}

double RunConfig::real(const std::string& key) const {
  const auto& text = get(key);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const auto& text = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
  const auto& text = get(key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": '" + text + "' is not true/false");
}

GenConfig RunConfig::gen() const {
  GenConfig g;
  g.classes = count("classes");
  g.textures = count("textures");
  g.train_per_class = count("train-per-class");
  g.eval_per_class = count("eval-per-class");
  g.image_size = count("image-size");
  g.rho = real("rho");
  g.mask_coverage = real("mask-coverage");
  g.mask_corruption = real("mask-corruption");
  g.seed = u64("seed");
  g.validate();
  return g;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.image_size = count("image-size");
  e.channels = 3;
  e.patch_size = count("patch-size");
  e.blocks = count("blocks");
  e.heads = count("heads");
  e.model_dim = count("model-dim");
  e.parts = count("parts");
  e.fg_parts = count("fg-parts");
  e.mlp_ratio = count("mlp-ratio");
  e.upsampler_hidden = count("upsampler-hidden");
  e.validate();
  return e;
}

DistillConfig RunConfig::distill() const {
  DistillConfig d;
  d.out_dim = count("out-dim");
  d.head_hidden = count("head-hidden");
  d.classes = flag("supervised") ? count("classes") : 0;
  d.student_temp = real("student-temp");
  d.teacher_temp = real("teacher-temp");
  d.center_momentum = real("center-momentum");
  d.ema_momentum = real("ema-momentum");
  d.latent_temp = real("latent-temp");
  d.power_iters = static_cast<unsigned>(count("power-iters"));
  d.noise = parse_noise_kind(get("noise"));
  d.mix_norm = parse_mix_norm(get("mix-norm"));
  d.validate();
  return d;
}

LossWeights RunConfig::weights() const {
  LossWeights w;
  w.cls = real("lambda-cls");
  w.mix = real("lambda-mix");
  w.sparse = real("lambda-s");
  w.ortho = real("lambda-o");
  w.cls_inv = real("lambda-cls-inv");
  w.p_inv = real("lambda-p-inv");
  w.sup = flag("supervised") ? real("lambda-sup") : 0.0;
  w.validate();
  return w;
}

AugmentConfig RunConfig::augment() const {
  AugmentConfig a;
  a.min_scale = real("min-scale");
  a.flip_prob = real("flip-prob");
  a.jitter = real("jitter");
  if (!(a.min_scale > 0 && a.min_scale <= 1)) throw ConfigError("min-scale must lie in (0, 1]");
  if (!(a.flip_prob >= 0 && a.flip_prob <= 1)) throw ConfigError("flip-prob must lie in [0, 1]");
  if (!(a.jitter >= 0 && a.jitter < 1)) throw ConfigError("jitter must lie in [0, 1)");
  return a;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"partwise: part-dictionary vision transformer toolkit"};
  app.require_subcommand(1);
  const char* commands[][2] = {{"gen-data", "generate the synthetic dataset and evaluation splits"},
                               {"pretrain", "pretrain student/teacher with mask alignment and part regularizers"},
                               {"finetune", "fine-tune with foreground-invariant distillation"},
                               {"eval-fewshot", "episodic nearest-prototype evaluation"},
                               {"eval-splits", "accuracy on original / m-same / m-rand and the BG-GAP"},
                               {"inspect", "write latent code, attention and part maps as PGM files"}};

  std::map<std::string, std::string> flag_values;
  std::map<std::string, bool> bool_values;
  std::string config_path;
  std::vector<std::pair<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>>> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "configuration file of 'key = value' lines");
    std::vector<std::pair<std::string, CLI::Option*>> options;
    for (const auto& k : kKeys) {
      const std::string key = k.key;
      CLI::Option* opt = is_bool_key(key) ? sub->add_flag("--" + key, bool_values[key], k.help)
                                          : sub->add_option("--" + key, flag_values[key], k.help)
                                                ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      options.emplace_back(key, opt);
    }
    subs.emplace_back(sub, std::move(options));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto chosen = app.get_subcommands();
    out << (chosen.empty() ? app.help() : chosen.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.merge_file(config_path);
    CLI::App* chosen = app.get_subcommands().front();
    for (const auto& [sub, options] : subs) {
      if (sub != chosen) continue;
      for (const auto& [key, opt] : options) {
        if (opt->count() == 0) continue;
        cfg.set(key, is_bool_key(key) ? (bool_values[key] ? "true" : "false") : flag_values[key]);
      }
    }
    if (const char* env = std::getenv("PARTWISE_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env);

    const std::string name = chosen->get_name();
    if (name == "gen-data") return cmd_gen_data(cfg, out);
    if (name == "pretrain") return cmd_train(cfg, Phase::kPretrain, out);
    if (name == "finetune") return cmd_train(cfg, Phase::kFinetune, out);
    if (name == "eval-fewshot") return cmd_eval_fewshot(cfg, out);
    if (name == "eval-splits") return cmd_eval_splits(cfg, out);
    return cmd_inspect(cfg, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace partwise
