#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations that see at least
// one input with requires_grad() (while gradient recording is enabled) record
// their parents and a backward closure; backward() walks the recorded graph
// in reverse topological order. Leaf tensors accumulate gradients across
// backward() calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clqg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Thrown when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Adds this node's grad into the grads of its parents.
  std::function<void(TensorNode&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  }
};

template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using Node = TensorNode<Real>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<Real> data() { return node_->data; }
  std::span<const Real> data() const { return node_->data; }
  Real item() const;
  Real at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), Real(0)); }

  /// Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// True while operations record a graph on this thread.
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

/// Reverse-mode pass from a scalar loss. Intermediate grads are recomputed
/// from scratch each call; leaf grads accumulate.
template <typename Real>
void backward(const Tensor<Real>& loss);

/// Builds an op result. When recording applies, the node keeps its parents
/// and the backward closure; otherwise the closure is dropped.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         std::function<void(TensorNode<Real>&)> backward_fn);

}  // namespace clqg
