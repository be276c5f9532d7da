#pragma once

// Minimal reverse-mode differentiation over flat double buffers. A Tape
// records values in creation order; backward() replays the recorded
// closures in reverse, accumulating gradients into every node.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "uwe/kernels.hpp"

namespace uwe::ad {

using Shape = std::vector<std::size_t>;

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

class Tape {
 public:
  explicit Tape(kernels::Exec exec = kernels::default_exec()) : exec_(exec) {}

  Var input(std::vector<double> value, Shape shape);
  Var scalar(double v) { return input({v}, {1}); }

  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  const Shape& shape(Var v) const { return nodes_[v.id].shape; }
  std::size_t size(Var v) const { return nodes_[v.id].value.size(); }
  double item(Var v) const;
  /// Valid after backward(); zero for nodes the output does not depend on.
  const std::vector<double>& grad(Var v) const { return grads_[v.id]; }

  /// Seeds d(out)/d(out) = 1; out must hold one element.
  void backward(Var out);

  kernels::Exec exec() const noexcept { return exec_; }
  std::size_t nodes() const noexcept { return nodes_.size(); }

  using Backward = std::function<void(Tape&, std::size_t self)>;
  Var push(std::vector<double> value, Shape shape, Backward back);
  std::vector<double>& grad_mut(std::size_t id) { return grads_[id]; }
  const std::vector<double>& grad_of(std::size_t id) const { return grads_[id]; }

 private:
  struct Node {
    std::vector<double> value;
    Shape shape;
    Backward back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  kernels::Exec exec_;
};

std::size_t numel(const Shape& s);

// Elementwise.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
/// a·x + b elementwise with scalar constants.
Var affine(Tape& t, Var x, double a, double b = 0.0);
/// a·x + b·y.
Var lincomb(Tape& t, double a, Var x, double b, Var y);
/// x + c with a constant tensor c.
Var add_const(Tape& t, Var x, std::span<const double> c);
Var silu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var exp(Tape& t, Var x);

// Reductions and shape-level ops.
Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);
/// mean |a - b| over elements.
Var mean_abs_diff(Tape& t, Var a, Var b);
/// mean (a - b)² over elements.
Var mean_sq_diff(Tape& t, Var a, Var b);
Var dot(Tape& t, Var a, Var b);
/// Scalars concatenated into a vector.
Var stack(Tape& t, std::span<const Var> scalars);
Var pick(Tape& t, Var v, std::size_t i);
Var softmax(Tape& t, Var v);
/// -(q·log p + (1-q)·log(1-p)) with p clamped to [eps, 1-eps]; the clamp
/// passes zero gradient.
Var binary_cross_entropy(Tape& t, Var p, double q, double eps);
/// -log(max(x, eps)).
Var neg_log(Tape& t, Var x, double eps);

/// v / ‖v‖; a vector with norm below 1e-12 maps to e0 with zero gradient.
Var l2_normalize(Tape& t, Var v);
inline constexpr double kNormGuard = 1e-12;

// Layers. Feature maps are CHW.
Var conv2d(Tape& t, Var x, Var w, Var b, const kernels::ConvShape& s);
/// F[c,h,w] · A[h,w].
Var mask_mul(Tape& t, Var f, Var a);
/// [C,H,W] → [C].
Var spatial_mean(Tape& t, Var f);
/// W[N,K] x[K] + b[N]; b may be invalid.
Var linear(Tape& t, Var x, Var w, Var b);
/// Applies linear() to each row of X[N,K] → [N,M].
Var rows_linear(Tape& t, Var x, Var w, Var b);
/// [N,K] → [K].
Var mean_rows(Tape& t, Var x);

}  // namespace uwe::ad
