#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "partwise/distill.hpp"
#include "partwise/synthdata.hpp"

namespace partwise {

enum class Metric { kEuclidean, kCosine };
Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric);

/// Indices into a labeled collection. Support entries are grouped by class in
/// `classes` order, `shot` per class; query entries likewise, `queries` per class.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::vector<std::size_t> classes;
  std::vector<std::size_t> support;
  std::vector<std::size_t> support_labels;
  std::vector<std::size_t> query;
  std::vector<std::size_t> query_labels;
};

/// Classes without replacement, then shot + queries distinct samples per class.
/// Throws SamplingError naming a class with too few samples, or when fewer
/// than `way` classes exist.
Episode sample_episode(std::span<const std::size_t> labels, std::size_t way, std::size_t shot, std::size_t queries,
                       Rng& rng);

struct Prototypes {
  Tensor centers;  // way x feat_dim
  std::vector<std::size_t> class_order;
};

/// Row m is the mean of the rows of `features` labeled class_order[m].
/// Throws ContractError when a class has no support rows.
Prototypes prototypes(const Tensor& features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> class_order);

/// Class id of the nearest prototype; ties go to the lowest class_order index.
std::size_t classify(std::span<const float> query, const Prototypes& protos, Metric metric);

struct Accuracy {
  double mean = 0;  // percent
  double ci = 0;    // 95% half-width, 1.96 * sample std / sqrt(episodes)
  std::size_t episodes = 0;
};

/// Aggregates per-episode accuracies (percent). One episode has ci 0.
Accuracy summarize(std::span<const double> per_episode);

/// Runs `episodes` episodes; `score` returns the percent correct for one.
Accuracy run_episodes(std::span<const std::size_t> labels, std::size_t way, std::size_t shot, std::size_t queries,
                      std::size_t episodes, Rng& rng, const std::function<double(const Episode&)>& score);

/// Nearest-prototype evaluation on precomputed features (one row per sample).
Accuracy evaluate(const Tensor& features, std::span<const std::size_t> labels, std::size_t way, std::size_t shot,
                  std::size_t queries, std::size_t episodes, Rng& rng, Metric metric = Metric::kEuclidean);

/// Teacher-style features: the final cls token, optionally concatenated with
/// patch tokens pooled by the cls row of the final self-attention (head mean).
Tensor extract_features(const Model<float>& model, const std::vector<Sample>& samples, const EncoderConfig& enc,
                        bool attention_pool = false);

/// Percent of samples whose logit-head argmax equals the label. The model
/// must have a logit head.
double classification_accuracy(const Model<float>& model, const std::vector<Sample>& samples,
                               const EncoderConfig& enc);

}  // namespace partwise
