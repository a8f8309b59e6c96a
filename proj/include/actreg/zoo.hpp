#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "actreg/autodiff.hpp"
#include "actreg/error.hpp"
#include "actreg/rng.hpp"
#include "actreg/tensor.hpp"

namespace actreg {

enum class Arch { bimodal, physics, mlp, cnn };

inline const char* arch_name(Arch a) {
  switch (a) {
    case Arch::bimodal: return "bimodal";
    case Arch::physics: return "physics";
    case Arch::mlp: return "mlp";
    case Arch::cnn: return "cnn";
  }
  return "?";
}

inline Arch parse_arch(std::string_view s) {
  if (s == "bimodal") return Arch::bimodal;
  if (s == "physics") return Arch::physics;
  if (s == "mlp") return Arch::mlp;
  if (s == "cnn") return Arch::cnn;
  throw ValidationError("unknown architecture '" + std::string(s) + "' (expected bimodal|physics|mlp|cnn)");
}

struct CnnOptions {
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t dense = 128;
  friend bool operator==(const CnnOptions&, const CnnOptions&) = default;
};

struct ModelSpec {
  Arch arch = Arch::mlp;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::optional<double> glia_ratio;  // bimodal only
  CnnOptions cnn;                    // cnn only

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ImageGeometry {
  std::size_t channels, side;
};

/// Grayscale if input_dim is a perfect square, RGB if input_dim / 3 is.
inline ImageGeometry infer_image(std::size_t input_dim) {
  auto isqrt = [](std::size_t n) {
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : std::size_t{0};
  };
  if (const auto s = isqrt(input_dim); s) return {1, s};
  if (input_dim % 3 == 0) {
    if (const auto s = isqrt(input_dim / 3); s) return {3, s};
  }
  throw ValidationError("cnn: input_dim " + std::to_string(input_dim) +
                        " is not a square grayscale or RGB image");
}

inline std::size_t glia_width(const ModelSpec& spec) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(spec.hidden_dim) * spec.glia_ratio.value_or(0.0)));
}

inline void validate(const ModelSpec& spec) {
  if (spec.input_dim == 0 || spec.hidden_dim == 0 || spec.output_dim == 0) {
    throw ValidationError("model spec: input_dim, hidden_dim and output_dim must be positive");
  }
  if (spec.glia_ratio.has_value() != (spec.arch == Arch::bimodal)) {
    throw ValidationError("model spec: glia_ratio is required for bimodal and forbidden otherwise");
  }
  switch (spec.arch) {
    case Arch::bimodal:
      if (!(*spec.glia_ratio > 0.0) || !std::isfinite(*spec.glia_ratio)) {
        throw ValidationError("bimodal: glia_ratio must be a positive finite number");
      }
      if (glia_width(spec) < 1) {
        throw ValidationError("bimodal: floor(hidden_dim * glia_ratio) must be at least 1");
      }
      break;
    case Arch::physics:
      if (spec.hidden_dim < 3) throw ValidationError("physics: hidden_dim must be at least 3");
      break;
    case Arch::cnn: {
      const auto img = infer_image(spec.input_dim);
      if (img.side < 4) throw ValidationError("cnn: image side must be at least 4 for two 2x2 pools");
      if (spec.cnn.conv1 == 0 || spec.cnn.conv2 == 0 || spec.cnn.dense == 0) {
        throw ValidationError("cnn: channel and dense sizes must be positive");
      }
      break;
    }
    case Arch::mlp: break;
  }
}

struct Parameter {
  std::string name;
  Tensor value;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// A built architecture: its spec and parameters in a fixed, arch-defined order
/// (each layer contributes its weight then its bias).
struct Model {
  ModelSpec spec;
  std::vector<Parameter> params;

  std::vector<Tensor> values() const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value);
    return out;
  }

  void assign(const std::vector<Tensor>& values) {
    if (values.size() != params.size()) throw ValidationError("model: parameter count mismatch on assign");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_same_shape(params[i].value, values[i], "model assign");
      params[i].value = values[i];
    }
  }

  friend bool operator==(const Model&, const Model&) = default;
};

inline std::size_t param_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& p : model.params) n += p.value.size();
  return n;
}

/// Number of hidden post-activation tensors that enter the activation energy.
inline std::size_t hidden_layer_count(Arch arch) {
  switch (arch) {
    case Arch::bimodal: return 4;
    case Arch::physics: return 6;
    case Arch::mlp: return 2;
    case Arch::cnn: return 3;
  }
  return 0;
}

inline std::vector<std::string> activation_names(Arch arch) {
  switch (arch) {
    case Arch::bimodal: return {"relu", "tanh"};
    case Arch::physics: return {"relu", "tanh", "sigmoid"};
    case Arch::mlp:
    case Arch::cnn: return {"relu"};
  }
  return {};
}

namespace detail {

enum class InitScheme { kaiming, xavier };

inline Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed) {}

  void linear(const std::string& name, std::size_t in, std::size_t out, InitScheme scheme) {
    const double bound = scheme == InitScheme::kaiming ? std::sqrt(6.0 / static_cast<double>(in))
                                                       : std::sqrt(6.0 / static_cast<double>(in + out));
    params_.push_back({name + ".weight", uniform_init(Shape{in, out}, bound, rng_)});
    params_.push_back({name + ".bias", Tensor(Shape{out})});
  }

  void conv(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_ch * k * k));
    params_.push_back({name + ".weight", uniform_init(Shape{out_ch, in_ch, k, k}, bound, rng_)});
    params_.push_back({name + ".bias", Tensor(Shape{out_ch})});
  }

  Model finish(const ModelSpec& spec) && { return Model{spec, std::move(params_)}; }

 private:
  Rng rng_;
  std::vector<Parameter> params_;
};

inline void require_arch(const ModelSpec& spec, Arch arch) {
  if (spec.arch != arch) {
    throw ValidationError(std::string("builder for ") + arch_name(arch) + " given spec for " + arch_name(spec.arch));
  }
}

}  // namespace detail

/// Neuronal path (ReLU x2) and glial path (Tanh x2, width floor(h*g)),
/// concatenated into an integration layer.
inline Model build_bimodal(const ModelSpec& spec, std::uint64_t seed) {
  detail::require_arch(spec, Arch::bimodal);
  validate(spec);
  using detail::InitScheme;
  const std::size_t h = spec.hidden_dim, g = glia_width(spec);
  detail::Builder b(seed);
  b.linear("neuronal.0", spec.input_dim, h, InitScheme::kaiming);
  b.linear("neuronal.2", h, h, InitScheme::kaiming);
  b.linear("glial.0", spec.input_dim, g, InitScheme::xavier);
  b.linear("glial.2", g, g, InitScheme::xavier);
  b.linear("integration", h + g, spec.output_dim, InitScheme::xavier);
  return std::move(b).finish(spec);
}

/// Three paths (ReLU, Tanh, Sigmoid) each Linear(in,h)+act then Linear(h, h/3);
/// the head reads the 3*(h/3)-wide fused state concat(T, -V, -C).
inline Model build_physics(const ModelSpec& spec, std::uint64_t seed) {
  detail::require_arch(spec, Arch::physics);
  validate(spec);
  using detail::InitScheme;
  const std::size_t h = spec.hidden_dim, third = spec.hidden_dim / 3;
  detail::Builder b(seed);
  b.linear("T_pathway.0", spec.input_dim, h, InitScheme::kaiming);
  b.linear("T_pathway.2", h, third, InitScheme::xavier);
  b.linear("V_pathway.0", spec.input_dim, h, InitScheme::xavier);
  b.linear("V_pathway.2", h, third, InitScheme::xavier);
  b.linear("C_pathway.0", spec.input_dim, h, InitScheme::xavier);
  b.linear("C_pathway.2", h, third, InitScheme::xavier);
  b.linear("lagrangian", 3 * third, spec.output_dim, InitScheme::xavier);
  return std::move(b).finish(spec);
}

/// Two equal-width ReLU hidden layers and a linear head.
inline Model build_mlp(const ModelSpec& spec, std::uint64_t seed) {
  detail::require_arch(spec, Arch::mlp);
  validate(spec);
  using detail::InitScheme;
  detail::Builder b(seed);
  b.linear("fc1", spec.input_dim, spec.hidden_dim, InitScheme::kaiming);
  b.linear("fc2", spec.hidden_dim, spec.hidden_dim, InitScheme::kaiming);
  b.linear("out", spec.hidden_dim, spec.output_dim, InitScheme::xavier);
  return std::move(b).finish(spec);
}

/// Width of the flattened conv2 output feeding the dense layer.
inline std::size_t cnn_flat_width(const ModelSpec& spec) {
  const auto img = infer_image(spec.input_dim);
  const std::size_t side = (img.side / 2) / 2;
  return spec.cnn.conv2 * side * side;
}

/// conv3x3(pad 1)+ReLU+pool2, twice; then Linear+ReLU and a linear head.
inline Model build_cnn(const ModelSpec& spec, std::uint64_t seed) {
  detail::require_arch(spec, Arch::cnn);
  validate(spec);
  using detail::InitScheme;
  const auto img = infer_image(spec.input_dim);
  detail::Builder b(seed);
  b.conv("conv1", img.channels, spec.cnn.conv1, 3);
  b.conv("conv2", spec.cnn.conv1, spec.cnn.conv2, 3);
  b.linear("fc1", cnn_flat_width(spec), spec.cnn.dense, InitScheme::kaiming);
  b.linear("fc2", spec.cnn.dense, spec.output_dim, InitScheme::xavier);
  return std::move(b).finish(spec);
}

inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.arch) {
    case Arch::bimodal: return build_bimodal(spec, seed);
    case Arch::physics: return build_physics(spec, seed);
    case Arch::mlp: return build_mlp(spec, seed);
    case Arch::cnn: return build_cnn(spec, seed);
  }
  throw ValidationError("unknown architecture");
}

/// Copy of `model` with every parameter set to zero.
inline Model zeroed(Model model) {
  for (auto& p : model.params) p.value.fill(0.0);
  return model;
}

struct ForwardTrace {
  Var logits;
  std::vector<Var> hidden;  // post-activation hidden outputs in layer order
};

/// Binds the model's parameters onto `tape`, as leaves (trainable) or constants.
inline std::vector<Var> bind_parameters(Tape& tape, const Model& model, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(model.params.size());
  for (const auto& p : model.params) vars.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
  return vars;
}

/// Forward pass that keeps every intermediate on the tape so that both the
/// logits and the hidden activations can be differentiated.
inline ForwardTrace forward_traced(const Model& model, const std::vector<Var>& params, const Var& batch) {
  using namespace ops;
  const ModelSpec& spec = model.spec;
  if (params.size() != model.params.size()) throw ValidationError("forward: parameter binding size mismatch");
  const Shape& in_shape = batch.value().shape();
  const std::size_t b = in_shape.front();
  const std::size_t features = batch.value().size() / b;
  if (features != spec.input_dim || (spec.arch != Arch::cnn && in_shape.size() != 2)) {
    throw DimensionError("forward: batch " + to_string(in_shape) + " incompatible with input_dim " +
                         std::to_string(spec.input_dim));
  }
  auto lin = [&](const Var& x, std::size_t layer) {
    return add_bias(matmul(x, params[2 * layer]), params[2 * layer + 1]);
  };

  ForwardTrace trace;
  switch (spec.arch) {
    case Arch::bimodal: {
      const Var n1 = relu(lin(batch, 0));
      const Var n2 = relu(lin(n1, 1));
      const Var g1 = ops::tanh(lin(batch, 2));
      const Var g2 = ops::tanh(lin(g1, 3));
      trace.logits = lin(concat_cols({n2, g2}), 4);
      trace.hidden = {n1, n2, g1, g2};
      break;
    }
    case Arch::physics: {
      const Var ta = relu(lin(batch, 0));
      const Var t = lin(ta, 1);
      const Var va = ops::tanh(lin(batch, 2));
      const Var v = lin(va, 3);
      const Var ca = sigmoid(lin(batch, 4));
      const Var c = lin(ca, 5);
      trace.logits = lin(concat_cols({t, negate(v), negate(c)}), 6);
      trace.hidden = {ta, t, va, v, ca, c};
      break;
    }
    case Arch::mlp: {
      const Var h1 = relu(lin(batch, 0));
      const Var h2 = relu(lin(h1, 1));
      trace.logits = lin(h2, 2);
      trace.hidden = {h1, h2};
      break;
    }
    case Arch::cnn: {
      const auto img = infer_image(spec.input_dim);
      const Var x = in_shape.size() == 4 ? batch : reshape(batch, Shape{b, img.channels, img.side, img.side});
      if (x.value().dim(1) != img.channels || x.value().dim(2) != img.side || x.value().dim(3) != img.side) {
        throw DimensionError("forward: cnn batch " + to_string(in_shape) + " does not match image geometry");
      }
      const Var c1 = relu(add_channel_bias(conv2d(x, params[0], 1, 1), params[1]));
      const Var c2 = relu(add_channel_bias(conv2d(max_pool2d(c1, 2), params[2], 1, 1), params[3]));
      const Var d = relu(lin(flatten(max_pool2d(c2, 2)), 2));
      trace.logits = lin(d, 3);
      trace.hidden = {c1, c2, d};
      break;
    }
  }
  return trace;
}

/// Convenience overload: binds parameters as constants and the batch as input.
inline ForwardTrace forward_traced(const Model& model, Tape& tape, const Tensor& batch) {
  const auto params = bind_parameters(tape, model, false);
  return forward_traced(model, params, tape.constant(batch));
}

}  // namespace actreg
