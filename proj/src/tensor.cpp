#include "dysk/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace dysk {

long shape_size(const Shape& shape) {
  long n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

long flat_index(const Shape& shape, std::initializer_list<int> index) {
  if (index.size() != shape.size())
    throw std::invalid_argument("index rank " + std::to_string(index.size()) +
                                " does not match tensor rank " + std::to_string(shape.size()));
  long flat = 0;
  size_t k = 0;
  for (int i : index) {
    if (i < 0 || i >= shape[k])
      throw std::out_of_range("index " + std::to_string(i) + " out of bounds for axis " +
                              std::to_string(k) + " with extent " + std::to_string(shape[k]));
    flat = flat * shape[k] + i;
    ++k;
  }
  return flat;
}

namespace detail {

void Node::accumulate(const Array& g) {
  if (!requires_grad) return;
  if (g.size() != value.size())
    throw std::invalid_argument("gradient size " + std::to_string(g.size()) +
                                " does not match value size " + std::to_string(value.size()));
  if (grad.size() == 0) grad = Array::Zero(value.size());
  grad += g;
}

std::shared_ptr<Node> make_leaf(Shape shape, Array value, bool requires_grad) {
  if (shape_size(shape) != value.size())
    throw std::invalid_argument("shape " + shape_str(shape) + " does not hold " +
                                std::to_string(value.size()) + " values");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Tensor make_op(Shape shape, Array value, std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backprop) {
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p->requires_grad;
  auto node = make_leaf(std::move(shape), std::move(value), any_grad);
  if (any_grad) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(node);
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  long n = shape_size(shape);
  return Tensor(detail::make_leaf(std::move(shape), Array::Zero(n), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  long n = shape_size(shape);
  return Tensor(detail::make_leaf(std::move(shape), Array::Constant(n, value), requires_grad));
}

Tensor Tensor::from_array(Shape shape, Array data, bool requires_grad) {
  return Tensor(detail::make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Array Tensor::grad() const {
  if (node_->grad_live()) return node_->grad;
  return Array::Zero(node_->value.size());
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> index) const {
  return node_->value[flat_index(shape(), index)];
}

void Tensor::backward() const {
  if (size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;  // nothing reachable wants a gradient

  // Iterative post-order DFS; reversed post-order visits every node before
  // any of its inputs.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      detail::Node* parent = top.node->parents[top.next_parent++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  node_->accumulate(Array::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backprop && node->grad_live()) node->backprop(*node);
  }
}

Tensor Tensor::detach() const {
  return Tensor(detail::make_leaf(shape(), node_->value, false));
}

}  // namespace dysk
