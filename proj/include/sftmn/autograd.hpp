#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sftmn/tensor.hpp"

namespace sftmn {

struct Node;
using BackwardFn = std::function<void(Node&)>;

/// One value on the reverse-mode tape.
///
/// A node owns its forward value, its accumulated gradient, strong references
/// to its inputs and the closure that pushes its gradient into those inputs.
/// Closures receive the node itself, so nodes never reference themselves and
/// a graph is released as soon as the last Var pointing at its root goes away.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  // Gradient buffer, zero-initialized on first access.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // Only meaningful on leaves (parameters); mutating an interior value
  // invalidates any recorded backward closure that captured it.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var parameter(Tensor value) { return Var(std::move(value), true); }
inline Var constant(Tensor value) { return Var(std::move(value), false); }

// Records an op result. The closure is attached only when recording is
// enabled and at least one input requires a gradient.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn);

// Accumulates d(root)/d(leaf) into every reachable leaf. `root` must be 1x1.
void backward(const Var& root);

bool grad_enabled();

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// w * x for a learned 1x1 scalar w.
Var mul_scalar(const Var& x, const Var& w);
Var relu(const Var& x);
Var sum_all(const Var& x);

// Same-length 1-D convolution over time with zero padding.
// x: Cin×T, weight: Cout×(Cin·K) laid out [o][i·K + k], bias: Cout×1.
// Tap k reads frame t + (k − (K−1)/2)·dilation; K must be odd.
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel, int dilation);

// Softmax / log-softmax over channels, independently for each frame (column).
Var softmax_channels(const Var& x);
Var log_softmax_channels(const Var& x);
Tensor softmax_channels(const Tensor& x);
Tensor log_softmax_channels(const Tensor& x);

// Per-channel normalization over time, no affine parameters.
Var instance_norm(const Var& x, double eps = 1e-5);

/// Single-head scaled dot-product attention restricted to a sliding window:
/// query frame t attends to key frames s with |s − t| ≤ half_width that lie
/// inside the sequence. q, k: dk×T; v: dv×T; result dv×T.
Var local_attention(const Var& q, const Var& k, const Var& v, int half_width);

// Attention weights of local_attention, T × (2·half_width + 1); column j holds
// the weight on key t − half_width + j (zero outside the sequence).
Tensor local_attention_weights(const Tensor& q, const Tensor& k, int half_width);

}  // namespace sftmn
