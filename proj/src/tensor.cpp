#include "clqg/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace clqg {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero extent");
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename Real>
std::size_t Tensor<Real>::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return node_->shape[0];
}

template <typename Real>
std::size_t Tensor<Real>::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return node_->shape[1];
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         std::function<void(TensorNode<Real>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool record = false;
  if (g_grad_enabled) {
    for (const auto* input : inputs) record = record || input->requires_grad();
  }
  if (record) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto* input : inputs) node->parents.push_back(input->node());
    node->backward = std::move(backward_fn);
  }
  return Tensor<Real>(std::move(node));
}

template <typename Real>
void backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  using Node = TensorNode<Real>;
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; graphs are deep enough that recursion is unwise.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward) {
      node->grad.assign(node->data.size(), Real(0));
    } else {
      node->ensure_grad();
    }
  }
  loss.node()->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Tensor<float> make_result<float>(Shape, std::vector<float>,
                                          std::initializer_list<const Tensor<float>*>,
                                          std::function<void(TensorNode<float>&)>);
template Tensor<double> make_result<double>(Shape, std::vector<double>,
                                            std::initializer_list<const Tensor<double>*>,
                                            std::function<void(TensorNode<double>&)>);

}  // namespace clqg
