#pragma once

// Minimal define-by-run reverse-mode differentiation over NCHW tensors.

#include <functional>
#include <memory>
#include <vector>

#include "mea/kernels.hpp"
#include "mea/tensor.hpp"

namespace mea::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Empty tensor until a backward pass reaches this variable.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  // Value of a single-element tensor.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Accumulates d(root)/d(v) into every reachable variable that requires grad.
void backward(const Var& root);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
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
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_tensor(const Var& a, const Tensor& t);
Var mul_tensor(const Var& a, const Tensor& t);

Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var linear(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh(const Var& x);
Var avg_pool(const Var& x, int factor);
Var upsample(const Var& x, int factor);
Var global_avg_pool(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var reshape(const Var& x, Shape shape);

// x + softplus_k(-x) - softplus_k(x - 1): monotone, range (0, 1), ~identity inside.
Var smooth_clamp(const Var& x, double sharpness);
// min(max(x, 0), 1) with gradient passed where 0 <= x <= 1.
Var hard_clamp(const Var& x);

// Separable Gaussian blur with replicated borders.
Var gaussian_blur(const Var& x, int kernel_size, double sigma);
// Bilinear resample of the box [top, top+box_h) x [left, left+box_w) back to full size.
Var crop_resize(const Var& x, double top, double left, double box_h, double box_w);
// Blockwise DCT quantization; the backward pass treats the rounding as identity.
Var jpeg_straight_through(const Var& x, const kernels::QuantTable& table);

// Scalar reductions.
Var mse(const Var& a, const Var& b);
Var mean_square(const Var& a);
Var bce_with_logits(const Var& logits, double target);

}  // namespace mea::ag
