#include <gtest/gtest.h>

#include "actreg/zoo.hpp"

using namespace actreg;

namespace {

std::size_t count(Arch arch, std::size_t in, std::size_t h, std::size_t out, std::optional<double> g = std::nullopt) {
  return param_count(build_model({arch, in, h, out, g, {}}, 0));
}

std::size_t dense(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

TEST(ParamCount, BimodalPublishedCounts) {
  EXPECT_EQ(count(Arch::bimodal, 784, 1024, 10, 1.0), 3727370u);
  EXPECT_EQ(count(Arch::bimodal, 5000, 1024, 20, 1.0), 12382228u);
  // Audio row is only published to the nearest thousand.
  const std::size_t audio = count(Arch::bimodal, 700, 1024, 10, 1.0);
  EXPECT_EQ(audio, 2 * (dense(700, 1024) + dense(1024, 1024)) + dense(2048, 10));
  EXPECT_LE(audio > 3555000 ? audio - 3555000 : 3555000 - audio, 500u);
}

TEST(ParamCount, BimodalHandEnumeration) {
  // in=2, h=4, g=0.5 -> glial width 2
  const std::size_t expect = dense(2, 4) + dense(4, 4) + dense(2, 2) + dense(2, 2) + dense(4 + 2, 2);
  EXPECT_EQ(expect, 58u);
  EXPECT_EQ(count(Arch::bimodal, 2, 4, 2, 0.5), expect);
}

TEST(ParamCount, PhysicsWithinHeadRoundingBand) {
  const std::size_t n = count(Arch::physics, 784, 1024, 10);
  EXPECT_EQ(n, 3 * (dense(784, 1024) + dense(1024, 341)) + dense(1023, 10));
  EXPECT_LE(n > 3470325 ? n - 3470325 : 3470325 - n, 20u);
  const std::size_t audio = count(Arch::physics, 700, 1024, 10);
  EXPECT_LE(audio > 3212000 ? audio - 3212000 : 3212000 - audio, 500u);
}

TEST(ParamCount, MlpPublishedCounts) {
  EXPECT_EQ(count(Arch::mlp, 784, 1024, 10), 1863690u);
  EXPECT_EQ(count(Arch::mlp, 5000, 1024, 20), 6191124u);
}

TEST(ParamCount, CnnHandEnumeration) {
  // 3x3 convs: 1->8 and 8->16; 28 -> 14 -> 7 after pooling; dense 16*7*7 -> 128 -> 10
  const std::size_t expect = (8 * 1 * 9 + 8) + (16 * 8 * 9 + 16) + dense(16 * 7 * 7, 128) + dense(128, 10);
  EXPECT_EQ(count(Arch::cnn, 784, 1024, 10), expect);
}

TEST(ParamCount, EmptyModelIsZero) { EXPECT_EQ(param_count(Model{}), 0u); }

TEST(ParamCountProperty, BimodalMonotoneInGliaRatio) {
  std::size_t prev = 0;
  for (double g = 0.1; g <= 3.0; g += 0.1) {
    const std::size_t n = count(Arch::bimodal, 20, 16, 3, g);
    EXPECT_GE(n, prev) << "g=" << g;
    prev = n;
  }
}

TEST(ModelSpec, Validation) {
  EXPECT_THROW(build_model({Arch::bimodal, 4, 4, 2, 0.1, {}}, 0), ValidationError);  // floor(0.4) = 0
  EXPECT_THROW(build_model({Arch::bimodal, 4, 4, 2, std::nullopt, {}}, 0), ValidationError);
  EXPECT_THROW(build_model({Arch::mlp, 4, 4, 2, 1.0, {}}, 0), ValidationError);
  EXPECT_THROW(build_model({Arch::physics, 4, 2, 2, std::nullopt, {}}, 0), ValidationError);
  EXPECT_THROW(build_model({Arch::cnn, 20, 4, 2, std::nullopt, {}}, 0), ValidationError);
}

TEST(Forward, HiddenCountsAndLogitShape) {
  const std::pair<Arch, std::size_t> cases[] = {{Arch::bimodal, 4}, {Arch::physics, 6}, {Arch::mlp, 2}, {Arch::cnn, 3}};
  for (auto [arch, layers] : cases) {
    ModelSpec spec{arch, 16, 6, 3, arch == Arch::bimodal ? std::optional(1.0) : std::nullopt, {2, 3, 5}};
    const Model m = build_model(spec, 1);
    Tape tape;
    const ForwardTrace t = forward_traced(m, tape, Tensor({5, 16}, 0.3));
    EXPECT_EQ(t.hidden.size(), layers) << arch_name(arch);
    EXPECT_EQ(hidden_layer_count(arch), layers);
    EXPECT_EQ(t.logits.value().shape(), (Shape{5, 3}));
  }
}

TEST(Forward, BimodalZeroInputZeroBiases) {
  const Model m = build_bimodal({Arch::bimodal, 3, 4, 2, 1.0, {}}, 7);
  Tape tape;
  const ForwardTrace t = forward_traced(m, tape, Tensor({2, 3}));
  for (const Var& h : t.hidden)
    for (double v : h.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, PhysicsZeroInputPropagatesHalfThroughConstraintPath) {
  const ModelSpec spec{Arch::physics, 3, 6, 2, std::nullopt, {}};
  const Model m = build_physics(spec, 3);
  Tape tape;
  const ForwardTrace t = forward_traced(m, tape, Tensor({1, 3}));
  for (double v : t.hidden[0].value().storage()) EXPECT_EQ(v, 0.0);  // T activation
  for (double v : t.hidden[2].value().storage()) EXPECT_EQ(v, 0.0);  // V activation
  for (double v : t.hidden[4].value().storage()) EXPECT_EQ(v, 0.5);  // C activation
  // Fused state is (0, 0, -C) with C = 0.5 * colsum(W_c2); logits = fused . W_head.
  const Tensor& wc2 = m.params[10].value;
  const Tensor& head = m.params[12].value;
  const std::size_t third = 2;
  for (std::size_t k = 0; k < 2; ++k) {
    double expect = 0.0;
    for (std::size_t j = 0; j < third; ++j) {
      double cj = 0.0;
      for (std::size_t i = 0; i < 6; ++i) cj += 0.5 * wc2.at(i, j);
      expect += -cj * head.at(2 * third + j, k);
    }
    EXPECT_NEAR(t.logits.value().at(0, k), expect, 1e-14);
  }
}

TEST(Forward, PhysicsFusionWidth) {
  for (std::size_t h : {3u, 7u, 12u, 1024u}) {
    const Model m = build_physics({Arch::physics, 2, h, 2, std::nullopt, {}}, 0);
    EXPECT_EQ(m.params[12].value.dim(0), 3 * (h / 3)) << h;
  }
}

TEST(Forward, ZeroParametersGiveZeroLogits) {
  for (Arch arch : {Arch::mlp, Arch::cnn}) {
    const ModelSpec spec{arch, arch == Arch::cnn ? 16u : 1u, 1, arch == Arch::cnn ? 3u : 1u, std::nullopt, {}};
    const Model m = zeroed(build_model(spec, 0));
    Tape tape;
    Tensor x({2, spec.input_dim}, 1.7);
    const ForwardTrace t = forward_traced(m, tape, x);
    for (double v : t.logits.value().storage()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, ShapeMismatch) {
  const Model m = build_mlp({Arch::mlp, 4, 3, 2, std::nullopt, {}}, 0);
  Tape tape;
  EXPECT_THROW(forward_traced(m, tape, Tensor({2, 5})), DimensionError);
}

TEST(Forward, CnnAcceptsRgbInput) {
  const Model m = build_cnn({Arch::cnn, 3 * 8 * 8, 4, 5, std::nullopt, {2, 2, 4}}, 0);
  EXPECT_EQ(m.params[0].value.shape(), (Shape{2, 3, 3, 3}));
  Tape tape;
  EXPECT_EQ(forward_traced(m, tape, Tensor({1, 192}, 0.1)).logits.value().shape(), (Shape{1, 5}));
}

TEST(ForwardProperty, DeterministicPerSeed) {
  Rng rng(1);
  for (Arch arch : {Arch::bimodal, Arch::physics, Arch::mlp, Arch::cnn}) {
    const ModelSpec spec{arch, 16, 6, 3, arch == Arch::bimodal ? std::optional(0.5) : std::nullopt, {}};
    Tensor x({4, 16});
    for (double& v : x.storage()) v = rng.normal();
    Tape t1, t2;
    const auto a = forward_traced(build_model(spec, 99), t1, x).logits.value();
    const auto b = forward_traced(build_model(spec, 99), t2, x).logits.value();
    EXPECT_EQ(a, b) << arch_name(arch);
    EXPECT_NE(build_model(spec, 99).values(), build_model(spec, 100).values());
  }
}

TEST(Init, KaimingAndXavierBoundsWithZeroBiases) {
  const Model m = build_bimodal({Arch::bimodal, 50, 40, 3, 1.0, {}}, 5);
  const double kaiming = std::sqrt(6.0 / 50.0), xavier = std::sqrt(6.0 / 90.0);
  for (double v : m.params[0].value.storage()) EXPECT_LE(std::abs(v), kaiming);  // relu path
  for (double v : m.params[4].value.storage()) EXPECT_LE(std::abs(v), xavier);   // tanh path
  for (double v : m.params[1].value.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Arch, NamesRoundTrip) {
  for (Arch a : {Arch::bimodal, Arch::physics, Arch::mlp, Arch::cnn}) EXPECT_EQ(parse_arch(arch_name(a)), a);
  EXPECT_THROW(parse_arch("transformer"), ValidationError);
}
