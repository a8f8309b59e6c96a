#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "actreg/objective.hpp"

using namespace actreg;

namespace {

ForwardTrace trace_of(Tape& tape, std::initializer_list<Tensor> layers) {
  ForwardTrace t;
  for (const Tensor& a : layers) t.hidden.push_back(tape.constant(a));
  t.logits = tape.constant(Tensor({layers.begin()->dim(0), 2}));
  return t;
}

}  // namespace

TEST(ActivationEnergy, ZeroActivations) {
  Tape tape;
  EXPECT_EQ(activation_energy(trace_of(tape, {Tensor({3, 4}), Tensor({3, 2})})).value(), 0.0);
}

TEST(ActivationEnergy, SingleLayer) {
  Tape tape;
  EXPECT_EQ(activation_energy(trace_of(tape, {Tensor::matrix({{1, 2, 2}})})).value(), 9.0);
}

TEST(ActivationEnergy, AdditiveOverLayers) {
  Tape tape;
  EXPECT_EQ(activation_energy(trace_of(tape, {Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 3}})})).value(), 10.0);
}

TEST(ActivationEnergy, BatchMeanNotWidthNormalised) {
  Tape tape;
  // rows have squared norms 9 and 1 -> batch mean 5; width 3 does not divide
  EXPECT_EQ(activation_energy(trace_of(tape, {Tensor::matrix({{1, 2, 2}, {0, 1, 0}})})).value(), 5.0);
}

TEST(ActivationEnergy, EmptyTraceRejected) {
  EXPECT_THROW(activation_energy(ForwardTrace{}), ValidationError);
}

TEST(ActivationEnergyProperty, NonNegativeAndQuadraticInScale) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a({1 + rng.below(4), 1 + rng.below(6)}), b({a.dim(0), 1 + rng.below(6)});
    for (double& v : a.storage()) v = rng.normal();
    for (double& v : b.storage()) v = rng.normal();
    const double c = rng.uniform(-5, 5);
    Tensor ca = a, cb = b;
    for (double& v : ca.storage()) v *= c;
    for (double& v : cb.storage()) v *= c;
    Tape tape;
    const double e = activation_energy(trace_of(tape, {a, b})).value();
    const double ec = activation_energy(trace_of(tape, {ca, cb})).value();
    EXPECT_GE(e, 0.0);
    EXPECT_NEAR(ec, c * c * e, 1e-10 * std::max(1.0, ec));
  }
}

TEST(RegularizedLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(regularized_loss(2.0, EnergyValue(100.0), 1e-2), 3.0);
  EXPECT_EQ(regularized_loss(std::numbers::ln10, EnergyValue(0.0), 0.3), std::numbers::ln10);
  EXPECT_EQ(regularized_loss(1.25, EnergyValue(7.0), 0.0), 1.25);
  EXPECT_THROW(regularized_loss(1.0, EnergyValue(1.0), -1e-3), ValidationError);
  EXPECT_THROW(EnergyValue(-1.0), ValidationError);
}

TEST(RegularizedLoss, LambdaZeroIsTheCrossEntropyNode) {
  Tape tape;
  const Var ce = tape.leaf(Tensor::scalar(0.7));
  const Var e = tape.leaf(Tensor::scalar(4.0));
  const Var loss = regularized_loss(ce, e, 0.0);
  EXPECT_EQ(loss.id(), ce.id());
  EXPECT_THROW(regularized_loss(ce, e, -1.0), ValidationError);
}

TEST(RegularizedLoss, GradientFlowsThroughBothTerms) {
  Tape tape;
  const Var ce = tape.leaf(Tensor::scalar(0.7));
  const Var e = tape.leaf(Tensor::scalar(4.0));
  tape.backward(regularized_loss(ce, e, 0.25));
  EXPECT_EQ(ce.grad()[0], 1.0);
  EXPECT_EQ(e.grad()[0], 0.25);
}

TEST(RegularizedLossProperty, GradCheckAllArchitectures) {
  for (Arch arch : {Arch::bimodal, Arch::physics, Arch::mlp, Arch::cnn}) {
    ModelSpec spec{arch, 16, 12, 4, arch == Arch::bimodal ? std::optional(1.0) : std::nullopt, {}};
    if (arch == Arch::cnn) spec.cnn = {4, 6, 12};
    for (double lambda : {1e-3, 1e-1}) {
      EXPECT_LT(check_model_gradients(spec, lambda, 3, 17).max_rel_error, 1e-4)
          << arch_name(arch) << " lambda=" << lambda;
    }
  }
}

TEST(Objective, LambdaZeroGradientsMatchPlainCrossEntropy) {
  const ModelSpec spec{Arch::mlp, 5, 4, 3, std::nullopt, {}};
  const Model m = build_model(spec, 2);
  Rng rng(1);
  Tensor x({6, 5});
  for (double& v : x.storage()) v = rng.normal();
  const std::vector<int> y{0, 1, 2, 2, 1, 0};

  Tape a;
  const auto pa = bind_parameters(a, m, true);
  a.backward(objective(m, pa, a.constant(x), y, 0.0).loss);

  Tape b;
  const auto pb = bind_parameters(b, m, true);
  b.backward(ops::softmax_cross_entropy(forward_traced(m, pb, b.constant(x)).logits, y));

  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].grad(), pb[i].grad());
}
