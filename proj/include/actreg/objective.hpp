#pragma once

#include <cmath>
#include <string>

#include "actreg/autodiff.hpp"
#include "actreg/gradcheck.hpp"
#include "actreg/error.hpp"
#include "actreg/zoo.hpp"

namespace actreg {

/// Non-negative, finite activation energy.
class EnergyValue {
 public:
  explicit EnergyValue(double value) : value_(value) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw ValidationError("energy value must be finite and non-negative, got " + std::to_string(value));
    }
  }
  double value() const noexcept { return value_; }
  friend bool operator==(const EnergyValue&, const EnergyValue&) = default;

 private:
  double value_;
};

/// Differentiable activation energy of a trace: for each hidden layer the
/// squared L2 norm of its activation, averaged over the batch, summed over layers.
/// Norms are not normalised by layer width.
inline Var activation_energy_var(const ForwardTrace& trace) {
  if (trace.hidden.empty()) throw ValidationError("activation energy: trace has no hidden activations");
  Var total;
  for (const Var& a : trace.hidden) {
    const double inv_batch = 1.0 / static_cast<double>(a.value().dim(0));
    const Var layer = ops::scale(ops::sum_squares(a), inv_batch);
    total = total.valid() ? ops::add(total, layer) : layer;
  }
  return total;
}

inline EnergyValue activation_energy(const ForwardTrace& trace) {
  return EnergyValue(activation_energy_var(trace).item());
}

/// ce + lambda * energy. With lambda == 0 the energy branch is not recorded,
/// so the loss node and every gradient are exactly those of plain cross entropy.
inline Var regularized_loss(const Var& ce, const Var& energy, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("regularized loss: lambda must be finite and >= 0, got " + std::to_string(lambda));
  }
  if (lambda == 0.0) return ce;
  return ops::add(ce, ops::scale(energy, lambda));
}

inline double regularized_loss(double ce, EnergyValue energy, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("regularized loss: lambda must be finite and >= 0, got " + std::to_string(lambda));
  }
  if (lambda == 0.0) return ce;
  return ce + lambda * energy.value();
}

/// Cross entropy plus weighted activation energy for one batch, on `tape`.
struct ObjectiveTerms {
  ForwardTrace trace;
  Var cross_entropy;
  Var energy;
  Var loss;
};

inline ObjectiveTerms objective(const Model& model, const std::vector<Var>& params, const Var& batch,
                                std::span<const int> labels, double lambda) {
  ObjectiveTerms terms;
  terms.trace = forward_traced(model, params, batch);
  terms.cross_entropy = ops::softmax_cross_entropy(terms.trace.logits, labels);
  terms.energy = activation_energy_var(terms.trace);
  terms.loss = regularized_loss(terms.cross_entropy, terms.energy, lambda);
  return terms;
}

/// Gradient check of the full regularized objective for a freshly built model
/// on a seeded random batch.
inline GradCheckResult check_model_gradients(const ModelSpec& spec, double lambda, std::size_t batch = 3,
                                             std::uint64_t seed = 0, GradCheckOptions opts = {}) {
  const Model model = build_model(spec, seed);
  Rng rng(derive_seed(seed, 99));
  Tensor x = Tensor::zeros({batch, spec.input_dim});
  for (double& v : x.storage()) v = rng.normal();
  std::vector<int> labels(batch);
  for (auto& l : labels) l = static_cast<int>(rng.below(spec.output_dim));
  opts.seed = seed;
  return grad_check(
      [&](Tape& tape, const std::vector<Var>& params) {
        return objective(model, params, tape.constant(x), labels, lambda).loss;
      },
      model.values(), opts);
}

}  // namespace actreg
