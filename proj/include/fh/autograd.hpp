#pragma once

// Tape-free reverse-mode differentiation over fh::Tensor.
//
// Every op returns a Var holding its value; when gradients are enabled and any
// input requires a gradient, the result also records its inputs and a closure
// that propagates the output gradient back. backward() walks the recorded graph
// in reverse topological order.

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fh/tensor.hpp"

namespace fh::ag {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  T item() const { return node_->value[0]; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every leaf that
/// requires them. `root` must be a scalar.
template <class T>
void backward(const Var<T>& root);

template <class T>
Var<T> detach(const Var<T>& x);

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

// --- layers -----------------------------------------------------------------

/// x[N,Ci,H,W], w[Co,Ci,k,k], optional b[Co].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// x[N,Ci,H,W], w[Ci,Co,k,k], optional b[Co].
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// Per-channel batch normalisation. In training mode batch statistics are used
/// and the running estimates are updated in place.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                  T momentum = T(0.1), T eps = T(1e-5));

/// x flattened per sample to [N, F]; w[O, F]; b[O] -> [N, O, 1, 1].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// --- elementwise ------------------------------------------------------------

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <class T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}

template <class T>
Var<T> sigmoid(const Var<T>& x);

/// Inverted dropout with a mask drawn from `seed`; identity when rate == 0.
template <class T>
Var<T> dropout(const Var<T>& x, double rate, std::uint64_t seed);

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scale(const Var<T>& a, T s);

/// sum_i weights[i] * terms[i]; all terms share one shape.
template <class T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms);

/// Elementwise mean over a non-empty list of same-shape tensors.
template <class T>
Var<T> mean_of(const std::vector<Var<T>>& xs);

/// Elementwise max over a non-empty list; ties route the gradient to the first.
template <class T>
Var<T> max_of(const std::vector<Var<T>>& xs);

// --- reductions to scalars --------------------------------------------------

/// mean((a - b)^2)
template <class T>
Var<T> mean_squared_error(const Var<T>& a, const Var<T>& b);

/// mean(|a - b|)
template <class T>
Var<T> mean_absolute_error(const Var<T>& a, const Var<T>& b);

/// mean((x - target)^2) for a constant target.
template <class T>
Var<T> mean_squared_to(const Var<T>& x, T target);

}  // namespace fh::ag
