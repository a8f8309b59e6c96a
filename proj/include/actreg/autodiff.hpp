#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "actreg/error.hpp"
#include "actreg/tensor.hpp"

namespace actreg {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  /// Value of a single-element node.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation trace. Nodes are appended as operations run,
/// so insertion order is already a topological order; backward() walks it in
/// reverse, visiting every node once and summing gradients across fan-out.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  /// Trainable input; its gradient is available after backward().
  Var leaf(Tensor value) { return push(std::move(value), true, {}); }

  /// Input that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  /// Records the result of an operation. The node requires a gradient iff
  /// any parent does; `backward` then receives the node's accumulated gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(op, std::move(value), std::vector<Var>(parents), std::move(backward));
  }

  Var record(const char* op, Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string("operation '") + op + "' produced a non-finite value");
    }
    bool needs = false;
    for (const Var& p : parents) {
      if (&p.tape() != this) throw ValidationError(std::string(op) + ": operands from different tapes");
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  /// Gradient of the last backward() target with respect to node `id`
  /// (zeros if the node did not influence it).
  const Tensor& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty()) {
      n.grad = Tensor(n.value.shape());
    }
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Adds `g` into the gradient accumulator of `v` (no-op for constants).
  void accumulate(const Var& v, const Tensor& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    require_same_shape(n.grad, g, "gradient accumulation");
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Tensor-producing variant for backward rules that build the gradient lazily.
  template <class Fn>
  void accumulate_with(const Var& v, Fn&& make) {
    if (!nodes_[v.id()].requires_grad) return;
    accumulate(v, std::forward<Fn>(make)());
  }

  /// Back-propagates from a single-element node.
  void backward(const Var& output) {
    if (&output.tape() != this) throw ValidationError("backward: output belongs to another tape");
    const Node& out = nodes_[output.id()];
    if (out.value.size() != 1) {
      throw DimensionError("backward: output must have one element, got " + to_string(out.value.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    nodes_[output.id()].grad = Tensor(out.value.shape(), 1.0);
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      const Tensor g = n.grad;
      n.backward(*this, g);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    mutable Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }
inline double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw DimensionError("item(): node has shape " + to_string(v.shape()));
  return v[0];
}

namespace ops {

using kernels::Activation;

/// Matrix product; backward dA = G * B^T, dB = A^T * G.
inline Var matmul(const Var& a, const Var& b) {
  Tensor y = kernels::matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate_with(a, [&] { return kernels::matmul_nt(g, b.value()); });
    t.accumulate_with(b, [&] { return kernels::matmul_tn(a.value(), g); });
  });
}

/// x[b x n] + bias[n], broadcast over rows.
inline Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_bias input");
  if (bv.size() != xv.dim(1)) {
    throw DimensionError("add_bias: bias " + to_string(bv.shape()) + " vs input " + to_string(xv.shape()));
  }
  Tensor y = xv;
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) y.at(i, j) += bv[j];
  return x.tape().record("add_bias", std::move(y), {x, bias}, [x, bias, rows, cols](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    t.accumulate_with(bias, [&] {
      Tensor gb(bias.value().shape());
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gb[j] += g.at(i, j);
      return gb;
    });
  });
}

/// x[b x c x h x w] + bias[c], broadcast over batch and spatial positions.
inline Var add_channel_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "add_channel_bias input");
  const std::size_t b = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (bias.value().size() != c) throw DimensionError("add_channel_bias: bias length disagrees with channels");
  Tensor y = xv;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double bc = bias.value()[ch];
      double* p = y.data().data() + (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bc;
    }
  return x.tape().record("add_channel_bias", std::move(y), {x, bias}, [x, bias, b, c, hw](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    t.accumulate_with(bias, [&] {
      Tensor gb(bias.value().shape());
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* p = g.data().data() + (n * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) gb[ch] += p[i];
        }
      return gb;
    });
  });
}

inline Var activation(const Var& x, Activation kind) {
  Tensor y = kernels::activate(x.value(), kind);
  return x.tape().record(kernels::name(kind), std::move(y), {x}, [x, kind](Tape& t, const Tensor& g) {
    const Tensor& in = x.value();
    Tensor gx(in.shape());
    const Tensor out = kernels::activate(in, kind);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * kernels::activation_slope(kind, in[i], out[i]);
    t.accumulate(x, gx);
  });
}

inline Var relu(const Var& x) { return activation(x, Activation::relu); }
inline Var tanh(const Var& x) { return activation(x, Activation::tanh); }
inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid); }

inline Var scale(const Var& x, double c) {
  Tensor y = x.value();
  for (double& v : y.storage()) v *= c;
  return x.tape().record("scale", std::move(y), {x}, [x, c](Tape& t, const Tensor& g) {
    Tensor gx = g;
    for (double& v : gx.storage()) v *= c;
    t.accumulate(x, gx);
  });
}

inline Var negate(const Var& x) { return scale(x, -1.0); }

/// Elementwise sum of equally shaped nodes.
inline Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return a.tape().record("add", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// Column-wise concatenation of [b x n_i] blocks.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().dim(0);
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols input");
    if (p.value().dim(0) != rows) throw DimensionError("concat_cols: row counts disagree");
    total += p.value().dim(1);
  }
  Tensor y(Shape{rows, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.dim(1); ++j) y.at(i, offset + j) = v.at(i, j);
    offset += v.dim(1);
  }
  return parts.front().tape().record("concat_cols", std::move(y), parts, [parts, rows](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = p.value().dim(1);
      t.accumulate_with(p, [&] {
        Tensor gp(Shape{rows, w});
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < w; ++j) gp.at(i, j) = g.at(i, off + j);
        return gp;
      });
      off += w;
    }
  });
}

/// Same elements under a new shape.
inline Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(x.value().shape()));
  });
}

/// [b x ...] -> [b x prod(...)]
inline Var flatten(const Var& x) {
  const std::size_t b = x.value().dim(0);
  return reshape(x, Shape{b, x.value().size() / b});
}

/// Cross-correlation via im2col; no bias.
inline Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t padding) {
  const kernels::ConvGeometry geom = kernels::conv_geometry(input.value(), kernels.value(), stride, padding);
  Tensor y = kernels::conv2d(input.value(), kernels.value(), stride, padding);
  return input.tape().record("conv2d", std::move(y), {input, kernels}, [input, kernels, geom](Tape& t, const Tensor& g) {
    const Tensor kmat = kernels.value().reshaped(Shape{geom.out_channels, geom.patch()});
    const bool want_input = t.requires_grad(input.id());
    const bool want_kernel = t.requires_grad(kernels.id());
    Tensor gk(Shape{geom.out_channels, geom.patch()});
    Tensor gi(input.value().shape());
    const std::size_t per_image = geom.out_channels * geom.positions();
    for (std::size_t n = 0; n < geom.batch; ++n) {
      Tensor gy(Shape{geom.out_channels, geom.positions()},
                std::vector<double>(g.data().begin() + static_cast<std::ptrdiff_t>(n * per_image),
                                    g.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per_image)));
      if (want_kernel) {
        const Tensor dk = kernels::matmul_nt(gy, kernels::im2col(input.value(), geom, n));
        for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += dk[i];
      }
      if (want_input) kernels::col2im_accumulate(kernels::matmul_tn(kmat, gy), geom, n, gi);
    }
    if (want_kernel) t.accumulate(kernels, std::move(gk).reshaped(kernels.value().shape()));
    if (want_input) t.accumulate(input, gi);
  });
}

/// Non-overlapping max pooling with a square window (floor on ragged edges).
inline Var max_pool2d(const Var& x, std::size_t window = 2) {
  const Tensor& in = x.value();
  require_rank(in, 4, "max_pool2d input");
  if (window == 0 || in.dim(2) < window || in.dim(3) < window) {
    throw DimensionError("max_pool2d: window " + std::to_string(window) + " exceeds input " + to_string(in.shape()));
  }
  const std::size_t b = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  Tensor y(Shape{b, c, oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = plane * h * w + (oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = plane * h * w + (oy * window + dy) * w + ox * window + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        y[o] = in[best];
        argmax[o] = best;
      }
  }
  return x.tape().record("max_pool2d", std::move(y), {x}, [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    Tensor gx(x.value().shape());
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
    t.accumulate(x, gx);
  });
}

/// Scalar sum of squared elements.
inline Var sum_squares(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return x.tape().record("sum_squares", Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor gx = x.value();
    const double k = 2.0 * g[0];
    for (double& v : gx.storage()) v *= k;
    t.accumulate(x, gx);
  });
}

/// Mean softmax cross entropy of [b x K] logits against integer labels.
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  kernels::CrossEntropy ce = kernels::softmax_cross_entropy(logits.value(), labels);
  return logits.tape().record("softmax_cross_entropy", Tensor::scalar(ce.loss), {logits},
                              [logits, grad = std::move(ce.grad_logits)](Tape& t, const Tensor& g) {
                                Tensor gl = grad;
                                for (double& v : gl.storage()) v *= g[0];
                                t.accumulate(logits, gl);
                              });
}

}  // namespace ops
}  // namespace actreg
