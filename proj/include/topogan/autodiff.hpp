#pragma once

// Tape-free reverse-mode differentiation. Every op returns a Var whose node
// keeps its parents and a closure that pushes the node's gradient to them;
// backward() walks the graph in reverse topological order.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "topogan/tensor.hpp"

namespace topogan::ad {

// Probabilities are clamped to [kEpsClip, 1 - kEpsClip] before taking logs.
inline constexpr double kEpsClip = 1e-7;

enum class Mode { train, eval };

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer();
  void accumulate(std::span<const T> g);
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Named trainable leaf. The gradient buffer always matches the value shape.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value);

  const std::string& name() const { return name_; }
  Var<T> var() const { return Var<T>(node_); }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& grad() { return node_->grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.fill(T(0)); }
  bool trainable() const { return node_->requires_grad; }
  void set_trainable(bool on) { node_->requires_grad = on; }

 private:
  std::string name_;
  std::shared_ptr<Node<T>> node_;
};

// Populates grads of every reachable node; output must hold one element.
template <typename T>
void backward(const Var<T>& output);

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}
template <typename T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value(), false);
}

// Elementwise arithmetic on equal shapes.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);
// Concatenates along axis 1; all other dimensions must agree.
template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b);

// x: N x Cin x H x W; w: Cout x Cin x k x k; b: Cout.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad);

// x: N x Cin x H x W; w: Cin x Cout x k x k (the kernel layout of the conv2d
// this is the adjoint of); output H' = (H-1)*stride - 2*pad + k + output_pad.
template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad,
                         std::size_t output_pad);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  std::size_t updates = 0;
};

// Per-channel normalisation over N x H x W (train) or with running stats
// (eval). Train mode updates `stats` with the unbiased batch variance, using
// a cumulative average until 1 / momentum batches have been seen.
template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats, Mode mode,
                   double momentum = 0.1, double eps = 1e-5);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> tanh(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
// Row-wise over the last axis.
template <typename T>
Var<T> softmax(const Var<T>& x);

// x: N x F, w: F x O, b: O.
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// N x C x H x W -> N x C.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

// Mean over elements of -[t ln p + (1-t) ln(1-p)] with p clamped to
// [kEpsClip, 1-kEpsClip]; the clamp is straight-through for the gradient.
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prediction, const Tensor<T>& target);

// Mean over rows of -sum_i t_i log softmax(z)_i. target: N x K rows.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const Tensor<T>& target);

// N x K one-hot rows from integer labels.
template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace topogan::ad
