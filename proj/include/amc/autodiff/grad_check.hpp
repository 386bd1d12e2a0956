#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "amc/autodiff/tensor.hpp"
#include "amc/rng.hpp"

namespace amc::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Coordinates sampled across all parameters (all of them if fewer exist).
  std::size_t min_coords = 64;
  /// Denominator floor of the relative error, so that coordinates whose
  /// true gradient is ~0 are judged on absolute error instead.
  double abs_floor = 1e-6;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
  bool passed = false;
};

/// Compares analytic gradients with central differences.
///
/// `backprop` must zero the gradients, run forward + backward and leave the
/// analytic gradients in each Parameter::grad. `loss` must run a forward
/// pass only and return the scalar loss. Both are evaluated with identical
/// mode (training or inference) by the caller.
inline GradCheckReport grad_check(const std::function<double()>& loss, const std::function<void()>& backprop,
                                  const ParamList& params, const GradCheckOptions& opt = {}) {
  backprop();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad.data);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t i = 0; i < params[pi]->value.size(); ++i) coords.emplace_back(pi, i);
  if (coords.size() > opt.min_coords) {
    // Partial Fisher-Yates: a seeded uniform subsample, but every parameter
    // tensor contributes at least one coordinate.
    CounterRng rng{opt.seed, 0xC0FFEE};
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    for (std::size_t pi = 0; pi < params.size(); ++pi)
      if (params[pi]->value.size()) picked.emplace_back(pi, rng.below(params[pi]->value.size()));
    for (std::size_t k = 0; k < opt.min_coords; ++k) {
      const std::size_t j = k + rng.below(coords.size() - k);
      std::swap(coords[k], coords[j]);
      picked.push_back(coords[k]);
    }
    coords = std::move(picked);
  }

  GradCheckReport rep;
  for (const auto& [pi, i] : coords) {
    double& w = params[pi]->value.data[i];
    const double orig = w;
    w = orig + opt.step;
    const double lp = loss();
    w = orig - opt.step;
    const double lm = loss();
    w = orig;
    const double numeric = (lp - lm) / (2.0 * opt.step);
    const double a = analytic[pi][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (!(rel <= rep.max_rel_error)) {  // NaN counts as a failure
      rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
      rep.worst = params[pi]->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                  " numeric=" + std::to_string(numeric);
    }
    ++rep.checked;
  }
  rep.passed = rep.checked > 0 && rep.max_rel_error <= opt.tolerance;
  return rep;
}

}  // namespace amc::ad
