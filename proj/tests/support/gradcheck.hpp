#pragma once

// Central finite-difference gradient checker over double-precision graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "partwise/layers.hpp"
#include "partwise/tensor.hpp"

namespace partwise::testing {

struct GradCheckOptions {
  double step = 1e-4;
  double rtol = 1e-3;
  double atol = 1e-7;  // floor for gradients that are zero up to roundoff
  std::size_t max_coords_per_param = 12;
};

struct GradCheckResult {
  std::string name;
  double worst_rel = 0.0;  // max |a - n| / max(|a|, |n|) over checked coords
  std::string worst_at;
  std::size_t checked = 0;
  std::size_t failed = 0;
  [[nodiscard]] bool ok() const { return checked > 0 && failed == 0; }
};

/// Compares autodiff gradients of `loss` with central differences for every
/// tensor in `params`. `loss` must be a pure function of the parameter
/// values: reseed any Rng it uses inside. Values held under stop-gradient
/// are recorded on the analytic pass and replayed on every probe.
inline GradCheckResult check_gradients(const std::string& name, const NamedParams<double>& params,
                                       const std::function<BasicTensor<double>()>& loss,
                                       const GradCheckOptions& opt = {}) {
  GradCheckResult result;
  result.name = name;
  PinnedConstants<double> pins;
  for (auto [pname, p] : params) p.zero_grad();
  {
    PinnedConstants<double>::Scope scope(pins, PinnedConstants<double>::Mode::kRecord);
    loss().backward();
  }
  auto evaluate = [&]() {
    PinnedConstants<double>::Scope scope(pins, PinnedConstants<double>::Mode::kReplay);
    NoGradGuard no_grad;
    return loss().item();
  };
  for (auto [pname, p] : params) {
    const std::size_t n = p.numel();
    const std::size_t stride = std::max<std::size_t>(1, n / opt.max_coords_per_param);
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(n, 0.0);
    for (std::size_t i = 0; i < n; i += stride) {
      auto data = p.mutable_data();
      const double original = data[i];
      data[i] = original + opt.step;
      const double up = evaluate();
      data[i] = original - opt.step;
      const double down = evaluate();
      data[i] = original;
      const double numeric = (up - down) / (2 * opt.step);
      const double a = analytic[i];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = scale > 0 ? diff / scale : 0.0;
      ++result.checked;
      if (diff > opt.rtol * scale + opt.atol) {
        ++result.failed;
      }
      if (diff > opt.atol && rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_at = pname + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                          " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

/// Wraps free tensors as an anonymous parameter list.
inline NamedParams<double> as_params(std::initializer_list<BasicTensor<double>> tensors) {
  NamedParams<double> out;
  std::size_t i = 0;
  for (const auto& t : tensors) out.emplace_back("arg" + std::to_string(i++), t);
  return out;
}

}  // namespace partwise::testing
