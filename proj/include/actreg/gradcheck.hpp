#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "actreg/autodiff.hpp"
#include "actreg/error.hpp"
#include "actreg/rng.hpp"

namespace actreg {

/// Builds a scalar loss on `tape` from leaf nodes bound to the parameters.
using LossBuilder = std::function<Var(Tape& tape, const std::vector<Var>& params)>;

struct GradCheckOptions {
  double perturbation = 1e-6;
  /// Tensors larger than this are checked on a seeded random subset of coordinates.
  std::size_t max_coords_per_tensor = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients against central differences.
/// Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> params,
                                  const GradCheckOptions& opts = {}) {
  if (!(opts.perturbation >= 1e-7 && opts.perturbation <= 1e-3)) {
    throw ValidationError("grad_check: perturbation must lie in [1e-7, 1e-3]");
  }

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    const Var loss = build(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  auto evaluate = [&](std::size_t ti, std::size_t idx) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.constant(p));
    double value = 0.0;
    try {
      value = build(tape, leaves).item();
    } catch (const NumericError& e) {
      throw NumericError("grad_check: non-finite loss perturbing tensor " + std::to_string(ti) + " index " +
                         std::to_string(idx) + " (" + e.what() + ")");
    }
    if (!std::isfinite(value)) {
      throw NumericError("grad_check: non-finite loss perturbing tensor " + std::to_string(ti) + " index " +
                         std::to_string(idx));
    }
    return value;
  };

  Rng rng(opts.seed);
  GradCheckResult result;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    std::vector<std::size_t> coords(params[ti].size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > opts.max_coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords_per_tensor);
    }
    for (std::size_t idx : coords) {
      const double original = params[ti][idx];
      params[ti][idx] = original + opts.perturbation;
      const double up = evaluate(ti, idx);
      params[ti][idx] = original - opts.perturbation;
      const double down = evaluate(ti, idx);
      params[ti][idx] = original;

      const double numeric = (up - down) / (2.0 * opts.perturbation);
      const double a = analytic[ti][idx];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = ti;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

}  // namespace actreg
