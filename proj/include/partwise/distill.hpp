#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partwise/checkpoint.hpp"
#include "partwise/encoder.hpp"
#include "partwise/mixture.hpp"

namespace partwise {

/// Weights of the training objectives. All must be non-negative.
struct LossWeights {
  double cls = 1.0;
  double mix = 1.0;
  double sparse = 0.5;
  double ortho = 0.5;
  double cls_inv = 1.0;
  double p_inv = 0.5;
  double sup = 0.0;  // label cross-entropy through the logit head

  void validate() const;
};

struct DistillConfig {
  std::size_t out_dim = 64;
  std::size_t head_hidden = 0;  // 0 selects 2 * model_dim
  std::size_t classes = 0;      // > 0 adds a logit head on the projection output
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  double center_momentum = 0.9;
  double ema_momentum = 0.996;
  double latent_temp = 1.0;  // softmax temperature over positions for L_p_inv
  unsigned power_iters = 2;
  NoiseKind noise = NoiseKind::kGaussian;
  MixNorm mix_norm = MixNorm::kL2;

  void validate() const;
  [[nodiscard]] std::size_t hidden(std::size_t model_dim) const { return head_hidden ? head_hidden : 2 * model_dim; }
};

enum class Phase { kPretrain, kFinetune };
std::string_view to_string(Phase phase);

/// Encoder, projection head and optional logit head.
template <class T>
struct Model {
  EncoderParams<T> encoder;
  FeedForward<T> head;
  std::optional<Linear<T>> logits;

  static Model init(const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng);
  [[nodiscard]] NamedParams<T> params(const std::string& prefix = "") const;
  [[nodiscard]] const PartBank<T>& final_bank() const { return encoder.blocks.back().parts; }
};

template <class T>
struct ModelOutput {
  Features<T> features;
  LatentCodes<T> codes;      // from the final block's distance maps
  BasicTensor<T> projection;  // out_dim, before temperature and centering
  std::optional<BasicTensor<T>> logits;
};

template <class T>
ModelOutput<T> forward(const Model<T>& model, const BasicTensor<T>& image, const EncoderConfig& enc, Rng& rng,
                       NoiseKind noise);

/// Student and EMA teacher with identical parameter names. The teacher's
/// leaves never require grad.
template <class T>
struct StudentTeacher {
  Model<T> student;
  Model<T> teacher;
  BasicTensor<T> center;  // out_dim, running mean of teacher projections

  /// Teacher starts as an exact copy of the student.
  static StudentTeacher init(const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng);
};

/// Deep copy of `model` (built for `enc` and `cfg`) whose leaves carry
/// `requires_grad`.
template <class T>
Model<T> clone(const Model<T>& model, const EncoderConfig& enc, const DistillConfig& cfg, bool requires_grad);

/// Student distribution softmax(projection / tau_s).
template <class T>
BasicTensor<T> student_distribution(const BasicTensor<T>& projection, const DistillConfig& cfg);
/// Teacher distribution softmax((projection - center) / tau_t), detached.
template <class T>
BasicTensor<T> teacher_distribution(const BasicTensor<T>& projection, const BasicTensor<T>& center,
                                    const DistillConfig& cfg);

/// -sum p_t log max(p_s, 1e-12). Both inputs must sum to 1 within 1e-5.
template <class T>
BasicTensor<T> cls_distill_loss(const BasicTensor<T>& teacher_dist, const BasicTensor<T>& student_dist);

/// -log softmax(logits)[label].
template <class T>
BasicTensor<T> label_cross_entropy(const BasicTensor<T>& logits, std::size_t label);

/// teacher <- m * teacher + (1 - m) * student for every parameter.
template <class T>
void ema_update(StudentTeacher<T>& pair, double momentum);

/// center <- m * center + (1 - m) * mean of `projections`.
template <class T>
void update_center(StudentTeacher<T>& pair, const std::vector<BasicTensor<T>>& projections, double momentum);

/// One training example: two augmented views with their masks. For fine-tuning
/// the first view doubles as the input x of the invariant branch.
struct TrainSample {
  Tensor view1;
  Tensor view2;
  MaskPair mask1;
  MaskPair mask2;
  std::optional<std::size_t> label;
};

using Batch = std::vector<TrainSample>;

/// Weighted loss terms; `total` carries the graph.
template <class T>
struct LossBreakdown {
  BasicTensor<T> total;
  double cls = 0, mix = 0, sparse = 0, ortho = 0, sup = 0, cls_inv = 0, p_inv = 0;
  bool degenerate_spectrum = false;
  std::vector<BasicTensor<T>> teacher_projections;  // for the center update
};

/// lambda_cls L_cls + lambda_mix L_mix + L_Q (+ lambda_sup L_sup), averaged
/// over the batch. L_cls is the mean of the two cross-view halves; L_mix
/// averages both views, samples without masks contributing 0.
template <class T>
LossBreakdown<T> pretrain_loss(const Batch& batch, const StudentTeacher<T>& pair, const LossWeights& weights,
                               const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng);

template <class T>
struct InvariantTerms {
  BasicTensor<T> cls_inv;
  BasicTensor<T> p_inv;
  std::optional<BasicTensor<T>> student_logits;  // from the x_f forward
};

/// Teacher sees x, student sees x_f = x * I(clamp(L_F^t)). L_cls_inv is the
/// cross-entropy between their head distributions; L_p_inv compares the
/// foreground codes after a softmax over positions. Codes are noise-free.
template <class T>
InvariantTerms<T> invariant_losses(const BasicTensor<T>& x, const StudentTeacher<T>& pair,
                                   const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng);

/// lambda_cls L_cls + lambda_cls_inv L_cls_inv + lambda_p_inv L_p_inv
/// (+ lambda_sup L_sup over every student forward).
template <class T>
LossBreakdown<T> finetune_loss(const Batch& batch, const StudentTeacher<T>& pair, const LossWeights& weights,
                               const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng);

/// Cosine decay from base_lr to final_lr after a linear warmup.
struct Schedule {
  double base_lr = 5e-4;
  double final_lr = 1e-5;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  [[nodiscard]] double lr_at(std::size_t step) const;
};

/// Adam with decoupled weight decay. Decay applies to matrix-shaped weights
/// except the part dictionaries and positional embeddings.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.04)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  /// Updates every parameter that holds a gradient; the rest are untouched.
  /// `params` must list the same tensors in the same order on every call.
  void step(const NamedParams<float>& params, double lr);
  [[nodiscard]] std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct StepMetrics {
  std::size_t step = 0;
  Phase phase = Phase::kPretrain;
  double total = 0, cls = 0, mix = 0, sparse = 0, ortho = 0, sup = 0, cls_inv = 0, p_inv = 0;
  double grad_norm = 0;
  double part_l1 = 0;
  double fg_gram_l1 = 0;
  double lr = 0;
};

std::string metrics_header();
std::string metrics_row(const StepMetrics& m);

/// Everything a training run mutates.
struct TrainState {
  EncoderConfig enc;
  DistillConfig cfg;
  LossWeights weights;
  Schedule schedule;
  StudentTeacher<float> pair;
  AdamW optimizer;
  Rng rng;
  std::size_t step = 0;
};

/// Forward, backward, optimizer update on the student, EMA on the teacher,
/// center update. Throws NumericError naming the first non-finite term.
StepMetrics train_step(TrainState& state, const Batch& batch, Phase phase);

struct AugmentConfig {
  double min_scale = 0.4;  // crop area fraction lower bound
  double flip_prob = 0.5;
  double jitter = 0.2;  // per-channel gain in [1 - jitter, 1 + jitter]
};

/// Random square crop resized back to full size (bilinear for the image,
/// nearest for the mask), horizontal flip and per-channel gain. The mask
/// follows the image geometry exactly.
std::pair<Tensor, MaskPair> augment(const Tensor& image, const MaskPair& mask, const AugmentConfig& cfg, Rng& rng);

/// Teacher parameters under their own names, student under "student.", and
/// the running center.
std::vector<NamedTensor> export_checkpoint(const StudentTeacher<float>& pair);
/// Overwrites pair values from a checkpoint; throws IoError on a missing or
/// mis-shaped tensor. Logit-head tensors may be absent (the head then keeps
/// its current values), so a pretraining checkpoint can seed a supervised
/// fine-tune.
void import_checkpoint(StudentTeacher<float>& pair, std::span<const NamedTensor> tensors);

extern template struct Model<float>;
extern template struct Model<double>;

}  // namespace partwise
