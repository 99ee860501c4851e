#include "partwise/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace partwise {

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"lambda-cls", cls},         {"lambda-mix", mix},
                                                {"lambda-s", sparse},        {"lambda-o", ortho},
                                                {"lambda-cls-inv", cls_inv}, {"lambda-p-inv", p_inv},
                                                {"lambda-sup", sup}};
  for (const auto& [name, value] : all) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw ConfigError(std::string(name) + " must be a finite non-negative number");
    }
  }
}

void DistillConfig::validate() const {
  if (out_dim == 0) throw ConfigError("out-dim must be positive");
  if (!(student_temp > 0) || !(teacher_temp > 0) || !(latent_temp > 0)) {
    throw ConfigError("temperatures must be positive");
  }
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit(center_momentum, "center-momentum");
  unit(ema_momentum, "ema-momentum");
  if (power_iters == 0) throw ConfigError("power-iters must be at least 1");
}

std::string_view to_string(Phase phase) { return phase == Phase::kPretrain ? "pretrain" : "finetune"; }

namespace {

template <class T>
BasicTensor<T> cast(const Tensor& t) {
  return BasicTensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()));
}

template <class T>
BasicTensor<T> weighted(const BasicTensor<T>& term, double weight) {
  return scale(term, static_cast<T>(weight));
}

template <class T>
double value_of(const BasicTensor<T>& t) {
  return static_cast<double>(t.item());
}

bool is_decayed(const std::string& name, const Tensor& t) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return t.rank() == 2 && !ends_with("parts.P") && !ends_with("pos_embed");
}

}  // namespace

template <class T>
Model<T> Model<T>::init(const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng) {
  cfg.validate();
  Model model;
  model.encoder = EncoderParams<T>::init(enc, rng);
  model.head = FeedForward<T>::init(enc.model_dim, cfg.hidden(enc.model_dim), cfg.out_dim, rng);
  if (cfg.classes > 0) model.logits = Linear<T>::init(cfg.out_dim, cfg.classes, rng);
  return model;
}

template <class T>
NamedParams<T> Model<T>::params(const std::string& prefix) const {
  NamedParams<T> out;
  encoder.collect(out, prefix);
  head.collect(out, prefix + "head");
  if (logits) logits->collect(out, prefix + "logits");
  return out;
}

template <class T>
ModelOutput<T> forward(const Model<T>& model, const BasicTensor<T>& image, const EncoderConfig& enc, Rng& rng,
                       NoiseKind noise) {
  ModelOutput<T> out;
  out.features = encode(image, model.encoder, enc);
  out.codes = mix_latents(out.features.last_maps, model.final_bank(), rng, noise);
  out.projection = reshape(model.head(reshape(out.features.cls, {1, enc.model_dim})), {model.head.fc2.bias.numel()});
  if (model.logits) {
    const std::size_t d = out.projection.numel();
    out.logits = reshape((*model.logits)(reshape(out.projection, {1, d})), {model.logits->bias.numel()});
  }
  return out;
}

template <class T>
Model<T> clone(const Model<T>& model, const EncoderConfig& enc, const DistillConfig& cfg, bool requires_grad) {
  Rng scratch(0);
  Model<T> copy = Model<T>::init(enc, cfg, scratch);
  const auto src = model.params();
  auto dst = copy.params();
  if (src.size() != dst.size()) throw ContractError("clone: model does not match its configuration");
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto& t = dst[i].second;
    if (src[i].first != dst[i].first || src[i].second.shape() != t.shape()) {
      throw ContractError("clone: parameter mismatch at " + src[i].first);
    }
    std::ranges::copy(src[i].second.data(), t.mutable_data().begin());
    t.set_requires_grad(requires_grad);
  }
  return copy;
}

template <class T>
StudentTeacher<T> StudentTeacher<T>::init(const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng) {
  StudentTeacher pair;
  pair.student = Model<T>::init(enc, cfg, rng);
  pair.teacher = clone(pair.student, enc, cfg, false);
  pair.center = BasicTensor<T>::zeros({cfg.out_dim});
  return pair;
}

template <class T>
BasicTensor<T> student_distribution(const BasicTensor<T>& projection, const DistillConfig& cfg) {
  return softmax_rows(projection, static_cast<T>(cfg.student_temp));
}

template <class T>
BasicTensor<T> teacher_distribution(const BasicTensor<T>& projection, const BasicTensor<T>& center,
                                    const DistillConfig& cfg) {
  NoGradGuard no_grad;
  return softmax_rows(sub(projection.detach(), center.detach()), static_cast<T>(cfg.teacher_temp));
}

template <class T>
BasicTensor<T> cls_distill_loss(const BasicTensor<T>& teacher_dist, const BasicTensor<T>& student_dist) {
  if (teacher_dist.shape() != student_dist.shape()) {
    throw DimensionError("cls_distill_loss: " + shape_string(teacher_dist.shape()) + " vs " +
                         shape_string(student_dist.shape()));
  }
  auto check = [](const BasicTensor<T>& p, const char* side) {
    double total = 0;
    for (T v : p.data()) {
      if (!(v >= T{0})) throw ContractError(std::string(side) + " distribution has a negative or NaN entry");
      total += static_cast<double>(v);
    }
    if (std::abs(total - 1.0) > 1e-5) {
      throw ContractError(std::string(side) + " distribution sums to " + std::to_string(total));
    }
  };
  check(teacher_dist, "teacher");
  check(student_dist, "student");
  return scale(sum(mul(teacher_dist.detach(), log_clamped(student_dist, T(1e-12)))), T{-1});
}

template <class T>
BasicTensor<T> label_cross_entropy(const BasicTensor<T>& logits, std::size_t label) {
  if (label >= logits.numel()) {
    throw ContractError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.numel()) +
                        " classes");
  }
  auto one_hot = BasicTensor<T>::zeros(logits.shape());
  one_hot.mutable_data()[label] = T{1};
  return scale(sum(mul(one_hot, log_clamped(softmax_rows(logits), T(1e-12)))), T{-1});
}

template <class T>
void ema_update(StudentTeacher<T>& pair, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ContractError("EMA momentum must lie in [0, 1]");
  const auto student = pair.student.params();
  auto teacher = pair.teacher.params();
  if (student.size() != teacher.size()) throw ContractError("student and teacher parameter sets differ");
  for (std::size_t i = 0; i < student.size(); ++i) {
    if (student[i].first != teacher[i].first) {
      throw ContractError("parameter name mismatch: " + student[i].first + " vs " + teacher[i].first);
    }
    const auto s = student[i].second.data();
    auto t = teacher[i].second.mutable_data();
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] = static_cast<T>(momentum * static_cast<double>(t[j]) + (1.0 - momentum) * static_cast<double>(s[j]));
    }
  }
}

template <class T>
void update_center(StudentTeacher<T>& pair, const std::vector<BasicTensor<T>>& projections, double momentum) {
  if (projections.empty()) return;
  auto c = pair.center.mutable_data();
  std::vector<double> mean(c.size(), 0.0);
  for (const auto& p : projections) {
    if (p.numel() != c.size()) throw DimensionError("update_center: projection size mismatch");
    for (std::size_t j = 0; j < c.size(); ++j) mean[j] += static_cast<double>(p.data()[j]);
  }
  for (std::size_t j = 0; j < c.size(); ++j) {
    mean[j] /= static_cast<double>(projections.size());
    c[j] = static_cast<T>(momentum * static_cast<double>(c[j]) + (1.0 - momentum) * mean[j]);
  }
}

namespace {

template <class T>
struct ViewOutputs {
  ModelOutput<T> teacher;
  ModelOutput<T> student;
  BasicTensor<T> teacher_dist;
  BasicTensor<T> student_dist;
};

template <class T>
ViewOutputs<T> run_view(const Tensor& view, const StudentTeacher<T>& pair, const EncoderConfig& enc,
                        const DistillConfig& cfg, Rng& rng) {
  const auto x = cast<T>(view);
  ViewOutputs<T> out;
  {
    NoGradGuard no_grad;
    out.teacher = forward(pair.teacher, x, enc, rng, NoiseKind::kNone);
    out.teacher_dist = teacher_distribution(out.teacher.projection, pair.center, cfg);
  }
  out.student = forward(pair.student, x, enc, rng, cfg.noise);
  out.student_dist = student_distribution(out.student.projection, cfg);
  return out;
}

/// Running sum of label cross-entropies over student forwards.
template <class T>
struct SupervisedSum {
  BasicTensor<T> total = BasicTensor<T>::scalar(T{0});
  std::size_t count = 0;

  void add_forward(const ModelOutput<T>& out, const std::optional<std::size_t>& label) {
    if (!label || !out.logits) return;
    total = add(total, label_cross_entropy(*out.logits, *label));
    ++count;
  }
  BasicTensor<T> mean() const { return count ? scale(total, T{1} / static_cast<T>(count)) : total; }
};

/// Symmetrized L_cls, optional supervision and bookkeeping shared by both phases.
template <class T>
struct CommonTerms {
  BasicTensor<T> cls_sum = BasicTensor<T>::scalar(T{0});
  SupervisedSum<T> sup;
  std::vector<ViewOutputs<T>> views;  // two per sample
};

template <class T>
CommonTerms<T> common_terms(const Batch& batch, const StudentTeacher<T>& pair, const EncoderConfig& enc,
                            const DistillConfig& cfg, Rng& rng) {
  CommonTerms<T> terms;
  for (const auto& sample : batch) {
    auto a = run_view(sample.view1, pair, enc, cfg, rng);
    auto b = run_view(sample.view2, pair, enc, cfg, rng);
    const auto half_ab = cls_distill_loss(a.teacher_dist, b.student_dist);
    const auto half_ba = cls_distill_loss(b.teacher_dist, a.student_dist);
    terms.cls_sum = add(terms.cls_sum, scale(add(half_ab, half_ba), T(0.5)));
    terms.sup.add_forward(a.student, sample.label);
    terms.sup.add_forward(b.student, sample.label);
    terms.views.push_back(std::move(a));
    terms.views.push_back(std::move(b));
  }
  return terms;
}

template <class T>
void require_batch(const Batch& batch) {
  if (batch.empty()) throw ContractError("training batch is empty");
}

template <class T>
InvariantTerms<T> invariant_from(const ModelOutput<T>& teacher_out, const BasicTensor<T>& x,
                                 const StudentTeacher<T>& pair, const EncoderConfig& enc, const DistillConfig& cfg,
                                 Rng& rng) {
  const std::size_t g = enc.grid();
  BasicTensor<T> x_f;
  BasicTensor<T> teacher_dist, teacher_codes;
  {
    NoGradGuard no_grad;
    x_f = foreground_image(x.detach(), teacher_out.codes, g, g);
    teacher_dist = teacher_distribution(teacher_out.projection, pair.center, cfg);
    teacher_codes = softmax_rows(teacher_out.codes.fg.detach(), static_cast<T>(cfg.latent_temp));
  }
  const auto student = forward(pair.student, x_f, enc, rng, NoiseKind::kNone);
  InvariantTerms<T> terms;
  terms.cls_inv = cls_distill_loss(teacher_dist, student_distribution(student.projection, cfg));
  terms.p_inv = cls_distill_loss(teacher_codes, softmax_rows(student.codes.fg, static_cast<T>(cfg.latent_temp)));
  terms.student_logits = student.logits;
  return terms;
}

}  // namespace

template <class T>
LossBreakdown<T> pretrain_loss(const Batch& batch, const StudentTeacher<T>& pair, const LossWeights& weights,
                               const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng) {
  require_batch<T>(batch);
  weights.validate();
  const T inv_batch = T{1} / static_cast<T>(batch.size());
  auto common = common_terms(batch, pair, enc, cfg, rng);

  LossBreakdown<T> out;
  auto total = BasicTensor<T>::scalar(T{0});
  if (weights.cls > 0) {
    const auto cls = weighted(scale(common.cls_sum, inv_batch), weights.cls);
    out.cls = value_of(cls);
    total = add(total, cls);
  }
  if (weights.mix > 0) {
    const std::size_t g = enc.grid();
    auto mix_sum = BasicTensor<T>::scalar(T{0});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto a = mixture_loss(common.views[2 * i].student.codes, batch[i].mask1, g, g, cfg.mix_norm);
      const auto b = mixture_loss(common.views[2 * i + 1].student.codes, batch[i].mask2, g, g, cfg.mix_norm);
      mix_sum = add(mix_sum, scale(add(a, b), T(0.5)));
    }
    const auto mix = weighted(scale(mix_sum, inv_batch), weights.mix);
    out.mix = value_of(mix);
    total = add(total, mix);
  }
  if (weights.sparse > 0 || weights.ortho > 0) {
    const auto q = quality_loss(pair.student.final_bank(), static_cast<T>(weights.sparse),
                                static_cast<T>(weights.ortho), cfg.power_iters, rng);
    out.sparse = value_of(q.sparse);
    out.ortho = value_of(q.ortho);
    out.degenerate_spectrum = q.degenerate;
    total = add(total, q.total);
  }
  if (weights.sup > 0 && common.sup.count > 0) {
    const auto sup = weighted(common.sup.mean(), weights.sup);
    out.sup = value_of(sup);
    total = add(total, sup);
  }
  for (const auto& v : common.views) out.teacher_projections.push_back(v.teacher.projection);
  out.total = total;
  return out;
}

template <class T>
InvariantTerms<T> invariant_losses(const BasicTensor<T>& x, const StudentTeacher<T>& pair,
                                   const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng) {
  ModelOutput<T> teacher_out;
  {
    NoGradGuard no_grad;
    teacher_out = forward(pair.teacher, x.detach(), enc, rng, NoiseKind::kNone);
  }
  return invariant_from(teacher_out, x, pair, enc, cfg, rng);
}

template <class T>
LossBreakdown<T> finetune_loss(const Batch& batch, const StudentTeacher<T>& pair, const LossWeights& weights,
                               const EncoderConfig& enc, const DistillConfig& cfg, Rng& rng) {
  require_batch<T>(batch);
  weights.validate();
  const T inv_batch = T{1} / static_cast<T>(batch.size());
  auto common = common_terms(batch, pair, enc, cfg, rng);

  LossBreakdown<T> out;
  auto total = BasicTensor<T>::scalar(T{0});
  if (weights.cls > 0) {
    const auto cls = weighted(scale(common.cls_sum, inv_batch), weights.cls);
    out.cls = value_of(cls);
    total = add(total, cls);
  }
  if (weights.cls_inv > 0 || weights.p_inv > 0) {
    auto cls_inv_sum = BasicTensor<T>::scalar(T{0});
    auto p_inv_sum = BasicTensor<T>::scalar(T{0});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto terms =
          invariant_from(common.views[2 * i].teacher, cast<T>(batch[i].view1), pair, enc, cfg, rng);
      cls_inv_sum = add(cls_inv_sum, terms.cls_inv);
      p_inv_sum = add(p_inv_sum, terms.p_inv);
      if (terms.student_logits && batch[i].label) {
        common.sup.total = add(common.sup.total, label_cross_entropy(*terms.student_logits, *batch[i].label));
        ++common.sup.count;
      }
    }
    if (weights.cls_inv > 0) {
      const auto cls_inv = weighted(scale(cls_inv_sum, inv_batch), weights.cls_inv);
      out.cls_inv = value_of(cls_inv);
      total = add(total, cls_inv);
    }
    if (weights.p_inv > 0) {
      const auto p_inv = weighted(scale(p_inv_sum, inv_batch), weights.p_inv);
      out.p_inv = value_of(p_inv);
      total = add(total, p_inv);
    }
  }
  if (weights.sup > 0 && common.sup.count > 0) {
    const auto sup = weighted(common.sup.mean(), weights.sup);
    out.sup = value_of(sup);
    total = add(total, sup);
  }
  for (const auto& v : common.views) out.teacher_projections.push_back(v.teacher.projection);
  out.total = total;
  return out;
}

double Schedule::lr_at(std::size_t step) const {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
  return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(const NamedParams<float>& params, double lr) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ContractError("optimizer parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].second;
    if (!p.has_grad()) continue;
    const bool decay = is_decayed(params[i].first, p);
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      if (decay) update += weight_decay_ * w[j];
      w[j] = static_cast<float>(w[j] - lr * update);
    }
  }
}

std::string metrics_header() {
  return "step\tphase\ttotal\tcls\tmix\tsparse\tortho\tsup\tcls_inv\tp_inv\tgrad_norm\tpart_l1\tfg_gram_l1\tlr";
}

std::string metrics_row(const StepMetrics& m) {
  std::ostringstream os;
  auto num = [&](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    os << '\t' << buf;
  };
  os << m.step << '\t' << to_string(m.phase);
  for (double v : {m.total, m.cls, m.mix, m.sparse, m.ortho, m.sup, m.cls_inv, m.p_inv, m.grad_norm, m.part_l1,
                   m.fg_gram_l1, m.lr}) {
    num(v);
  }
  return os.str();
}

StepMetrics train_step(TrainState& state, const Batch& batch, Phase phase) {
  const auto params = state.pair.student.params();
  for (auto [name, p] : params) p.zero_grad();

  auto loss = phase == Phase::kPretrain
                  ? pretrain_loss(batch, state.pair, state.weights, state.enc, state.cfg, state.rng)
                  : finetune_loss(batch, state.pair, state.weights, state.enc, state.cfg, state.rng);

  StepMetrics m;
  m.step = state.step;
  m.phase = phase;
  m.cls = loss.cls;
  m.mix = loss.mix;
  m.sparse = loss.sparse;
  m.ortho = loss.ortho;
  m.sup = loss.sup;
  m.cls_inv = loss.cls_inv;
  m.p_inv = loss.p_inv;
  m.total = value_of(loss.total);
  const std::pair<const char*, double> terms[] = {{"cls", m.cls},         {"mix", m.mix},     {"sparse", m.sparse},
                                                  {"ortho", m.ortho},     {"sup", m.sup},     {"cls_inv", m.cls_inv},
                                                  {"p_inv", m.p_inv},     {"total", m.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss term '" + std::string(name) + "' at " + std::string(to_string(phase)) +
                         " step " + std::to_string(state.step));
    }
  }

  loss.total.backward();
  double sq = 0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  m.grad_norm = std::sqrt(sq);
  if (!std::isfinite(m.grad_norm)) {
    throw NumericError("non-finite gradient at " + std::string(to_string(phase)) + " step " +
                       std::to_string(state.step));
  }

  m.lr = state.schedule.lr_at(state.step);
  state.optimizer.step(params, m.lr);
  ema_update(state.pair, state.cfg.ema_momentum);
  update_center(state.pair, loss.teacher_projections, state.cfg.center_momentum);

  const auto norms = part_norms(state.pair.student.final_bank());
  m.part_l1 = norms.l1;
  m.fg_gram_l1 = norms.fg_gram_l1;
  ++state.step;
  return m;
}

std::pair<Tensor, MaskPair> augment(const Tensor& image, const MaskPair& mask, const AugmentConfig& cfg, Rng& rng) {
  if (image.rank() != 3 || image.dim(0) != image.dim(1)) {
    throw DimensionError("augment expects a square H x W x C image, got " + shape_string(image.shape()));
  }
  const std::size_t size = image.dim(0), channels = image.dim(2);
  const double area = rng.uniform(cfg.min_scale, 1.0);
  const auto side = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(std::sqrt(area) * static_cast<double>(size))), 1, size);
  const auto y0 = static_cast<std::size_t>(rng.below(size - side + 1));
  const auto x0 = static_cast<std::size_t>(rng.below(size - side + 1));
  const bool flip = rng.bernoulli(cfg.flip_prob);
  std::vector<double> gain(channels);
  for (auto& g : gain) g = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);

  const double ratio = static_cast<double>(side) / static_cast<double>(size);
  auto source = [&](std::size_t out) {
    return std::clamp((static_cast<double>(out) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(side - 1));
  };
  auto nearest = [&](std::size_t out) {
    return std::min(static_cast<std::size_t>((static_cast<double>(out) + 0.5) * ratio), side - 1);
  };

  const auto px = image.data();
  std::vector<float> out(image.numel());
  std::vector<float> out_mask;
  if (mask.present) out_mask.resize(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    const double sy = source(y);
    const auto ya = static_cast<std::size_t>(sy);
    const std::size_t yb = std::min(ya + 1, side - 1);
    const double fy = sy - static_cast<double>(ya);
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t xs = flip ? size - 1 - x : x;
      const double sx = source(xs);
      const auto xa = static_cast<std::size_t>(sx);
      const std::size_t xb = std::min(xa + 1, side - 1);
      const double fx = sx - static_cast<double>(xa);
      auto at = [&](std::size_t r, std::size_t c, std::size_t ch) {
        return static_cast<double>(px[((y0 + r) * size + (x0 + c)) * channels + ch]);
      };
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double v = (1 - fy) * ((1 - fx) * at(ya, xa, ch) + fx * at(ya, xb, ch)) +
                         fy * ((1 - fx) * at(yb, xa, ch) + fx * at(yb, xb, ch));
        out[(y * size + x) * channels + ch] = static_cast<float>(std::clamp(v * gain[ch], 0.0, 1.0));
      }
      if (mask.present) {
        out_mask[y * size + x] = mask.fg.data()[(y0 + nearest(y)) * size + (x0 + nearest(xs))];
      }
    }
  }
  Tensor result(image.shape(), std::move(out));
  if (!mask.present) return {result, MaskPair::absent()};
  return {result, MaskPair::from_foreground(Tensor({size, size}, std::move(out_mask)))};
}

std::vector<NamedTensor> export_checkpoint(const StudentTeacher<float>& pair) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : pair.teacher.params()) out.push_back({name, t.detach()});
  for (const auto& [name, t] : pair.student.params("student.")) out.push_back({name, t.detach()});
  out.push_back({"center", pair.center.detach()});
  return out;
}

void import_checkpoint(StudentTeacher<float>& pair, std::span<const NamedTensor> tensors) {
  auto fill = [&](const std::string& name, Tensor target) {
    const auto it = std::ranges::find_if(tensors, [&](const NamedTensor& t) { return t.name == name; });
    if (it == tensors.end()) {
      const bool optional = name.starts_with("logits.") || name.starts_with("student.logits.");
      if (optional) return;
      throw IoError("checkpoint is missing tensor '" + name + "'");
    }
    if (it->tensor.shape() != target.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_string(it->tensor.shape()) + ", expected " +
                    shape_string(target.shape()));
    }
    std::ranges::copy(it->tensor.data(), target.mutable_data().begin());
  };
  for (const auto& [name, t] : pair.teacher.params()) fill(name, t);
  for (const auto& [name, t] : pair.student.params("student.")) fill(name, t);
  fill("center", pair.center);
}

#define PARTWISE_INSTANTIATE_DISTILL(T)                                                                              \
  template struct Model<T>;                                                                                          \
  template ModelOutput<T> forward(const Model<T>&, const BasicTensor<T>&, const EncoderConfig&, Rng&, NoiseKind);    \
  template Model<T> clone(const Model<T>&, const EncoderConfig&, const DistillConfig&, bool);                        \
  template struct StudentTeacher<T>;                                                                                 \
  template BasicTensor<T> student_distribution(const BasicTensor<T>&, const DistillConfig&);                         \
  template BasicTensor<T> teacher_distribution(const BasicTensor<T>&, const BasicTensor<T>&, const DistillConfig&);  \
  template BasicTensor<T> cls_distill_loss(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> label_cross_entropy(const BasicTensor<T>&, std::size_t);                                   \
  template void ema_update(StudentTeacher<T>&, double);                                                              \
  template void update_center(StudentTeacher<T>&, const std::vector<BasicTensor<T>>&, double);                       \
  template LossBreakdown<T> pretrain_loss(const Batch&, const StudentTeacher<T>&, const LossWeights&,                \
                                          const EncoderConfig&, const DistillConfig&, Rng&);                         \
  template InvariantTerms<T> invariant_losses(const BasicTensor<T>&, const StudentTeacher<T>&, const EncoderConfig&, \
                                              const DistillConfig&, Rng&);                                           \
  template LossBreakdown<T> finetune_loss(const Batch&, const StudentTeacher<T>&, const LossWeights&,                \
                                          const EncoderConfig&, const DistillConfig&, Rng&);

PARTWISE_INSTANTIATE_DISTILL(float)
PARTWISE_INSTANTIATE_DISTILL(double)

}  // namespace partwise
