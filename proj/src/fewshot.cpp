#include "partwise/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace partwise {

Metric parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::kEuclidean;
  if (name == "cosine") return Metric::kCosine;
  throw ConfigError("unknown metric '" + std::string(name) + "' (euclidean|cosine)");
}

std::string_view to_string(Metric metric) { return metric == Metric::kEuclidean ? "euclidean" : "cosine"; }

Episode sample_episode(std::span<const std::size_t> labels, std::size_t way, std::size_t shot, std::size_t queries,
                       Rng& rng) {
  if (way == 0 || shot == 0) throw ContractError("episodes need way >= 1 and shot >= 1");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < way) {
    throw SamplingError("episode needs " + std::to_string(way) + " classes, dataset has " +
                        std::to_string(by_class.size()));
  }
  const std::size_t need = shot + queries;
  std::vector<std::size_t> class_ids;
  for (const auto& [c, members] : by_class) {
    if (members.size() < need) {
      throw SamplingError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " samples, episode needs " + std::to_string(need));
    }
    class_ids.push_back(c);
  }
  rng.shuffle(std::span<std::size_t>(class_ids));
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.classes.assign(class_ids.begin(), class_ids.begin() + static_cast<std::ptrdiff_t>(way));
  for (std::size_t c : ep.classes) {
    auto members = by_class[c];
    // Partial Fisher-Yates: only the first `need` positions are drawn.
    for (std::size_t k = 0; k < need; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(members.size() - k));
      std::swap(members[k], members[j]);
    }
    for (std::size_t k = 0; k < shot; ++k) {
      ep.support.push_back(members[k]);
      ep.support_labels.push_back(c);
    }
    for (std::size_t k = shot; k < need; ++k) {
      ep.query.push_back(members[k]);
      ep.query_labels.push_back(c);
    }
  }
  return ep;
}

Prototypes prototypes(const Tensor& features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> class_order) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("prototypes: " + shape_string(features.shape()) + " features for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.dim(1), way = class_order.size();
  std::vector<double> sums(way * d, 0.0);
  std::vector<std::size_t> counts(way, 0);
  const auto f = features.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::ranges::find(class_order, labels[i]);
    if (it == class_order.end()) continue;
    const auto m = static_cast<std::size_t>(it - class_order.begin());
    ++counts[m];
    for (std::size_t j = 0; j < d; ++j) sums[m * d + j] += f[i * d + j];
  }
  std::vector<float> centers(way * d);
  for (std::size_t m = 0; m < way; ++m) {
    if (counts[m] == 0) throw ContractError("class " + std::to_string(class_order[m]) + " has no support samples");
    for (std::size_t j = 0; j < d; ++j) {
      centers[m * d + j] = static_cast<float>(sums[m * d + j] / static_cast<double>(counts[m]));
    }
  }
  return {Tensor({way, d}, std::move(centers)), std::vector<std::size_t>(class_order.begin(), class_order.end())};
}

std::size_t classify(std::span<const float> query, const Prototypes& protos, Metric metric) {
  const std::size_t way = protos.class_order.size(), d = protos.centers.dim(1);
  if (query.size() != d) throw DimensionError("classify: query has " + std::to_string(query.size()) + " features");
  const auto c = protos.centers.data();
  double q_norm = 0;
  for (float v : query) q_norm += static_cast<double>(v) * v;
  q_norm = std::sqrt(q_norm);
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < way; ++m) {
    double dist = 0, dot = 0, c_norm = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double cj = c[m * d + j], qj = query[j];
      dist += (qj - cj) * (qj - cj);
      dot += qj * cj;
      c_norm += cj * cj;
    }
    if (metric == Metric::kCosine) dist = 1.0 - dot / (q_norm * std::sqrt(c_norm) + 1e-12);
    if (dist < best_distance) {
      best_distance = dist;
      best = m;
    }
  }
  return protos.class_order[best];
}

Accuracy summarize(std::span<const double> per_episode) {
  Accuracy acc;
  acc.episodes = per_episode.size();
  if (per_episode.empty()) return acc;
  double total = 0;
  for (double a : per_episode) total += a;
  acc.mean = total / static_cast<double>(per_episode.size());
  if (per_episode.size() > 1) {
    double sq = 0;
    for (double a : per_episode) sq += (a - acc.mean) * (a - acc.mean);
    const double n = static_cast<double>(per_episode.size());
    acc.ci = 1.96 * std::sqrt(sq / (n - 1)) / std::sqrt(n);
  }
  return acc;
}

Accuracy run_episodes(std::span<const std::size_t> labels, std::size_t way, std::size_t shot, std::size_t queries,
                      std::size_t episodes, Rng& rng, const std::function<double(const Episode&)>& score) {
  if (episodes == 0) throw ContractError("evaluation needs at least one episode");
  std::vector<double> per_episode;
  per_episode.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) per_episode.push_back(score(sample_episode(labels, way, shot, queries, rng)));
  return summarize(per_episode);
}

Accuracy evaluate(const Tensor& features, std::span<const std::size_t> labels, std::size_t way, std::size_t shot,
                  std::size_t queries, std::size_t episodes, Rng& rng, Metric metric) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("evaluate: features " + shape_string(features.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.dim(1);
  const auto f = features.data();
  auto rows = [&](const std::vector<std::size_t>& idx) {
    std::vector<float> out;
    out.reserve(idx.size() * d);
    for (std::size_t i : idx) out.insert(out.end(), f.begin() + static_cast<std::ptrdiff_t>(i * d),
                                         f.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    return Tensor({idx.size(), d}, std::move(out));
  };
  return run_episodes(labels, way, shot, queries, episodes, rng, [&](const Episode& ep) {
    const auto protos = prototypes(rows(ep.support), ep.support_labels, ep.classes);
    std::size_t correct = 0;
    for (std::size_t k = 0; k < ep.query.size(); ++k) {
      const auto q = f.subspan(ep.query[k] * d, d);
      correct += classify(q, protos, metric) == ep.query_labels[k];
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(ep.query.size());
  });
}

Tensor extract_features(const Model<float>& model, const std::vector<Sample>& samples, const EncoderConfig& enc,
                        bool attention_pool) {
  NoGradGuard no_grad;
  const std::size_t d = enc.model_dim, width = attention_pool ? 2 * d : d;
  const std::size_t n = enc.num_patches();
  std::vector<float> out;
  out.reserve(samples.size() * width);
  for (const auto& s : samples) {
    const auto features = encode(s.image, model.encoder, enc);
    const auto cls = features.cls.data();
    out.insert(out.end(), cls.begin(), cls.end());
    if (!attention_pool) continue;
    std::vector<double> weights(n, 0.0);
    for (const auto& head : features.msa_attention) {
      for (std::size_t i = 0; i < n; ++i) weights[i] += head.at(0, i + 1);
    }
    double total = 0;
    for (double w : weights) total += w;
    std::vector<double> pooled(d, 0.0);
    const auto tokens = features.tokens.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) pooled[j] += weights[i] / total * tokens[(i + 1) * d + j];
    for (double v : pooled) out.push_back(static_cast<float>(v));
  }
  return Tensor({samples.size(), width}, std::move(out));
}

double classification_accuracy(const Model<float>& model, const std::vector<Sample>& samples,
                               const EncoderConfig& enc) {
  if (!model.logits) throw ConfigError("split evaluation needs a model trained with a logit head (classes > 0)");
  if (samples.empty()) throw ContractError("cannot score an empty split");
  NoGradGuard no_grad;
  Rng unused(0);
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto out = forward(model, s.image, enc, unused, NoiseKind::kNone);
    const auto logits = out.logits->data();
    const auto best = static_cast<std::size_t>(std::ranges::max_element(logits) - logits.begin());
    correct += best == s.label;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace partwise
