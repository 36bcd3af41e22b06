#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace dysk {

using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

long shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One recorded operation (or leaf). Nodes form an acyclic graph through
// `parents`; `backprop` reads this node's grad and accumulates into the
// parents. Built fresh on every forward pass.
struct Node {
  Shape shape;
  Array value;
  Array grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  bool grad_live() const { return grad.size() != 0; }
  void accumulate(const Array& g);
};

}  // namespace detail

// Dense n-dimensional array of doubles on a define-by-run graph.
// Copies are cheap handles sharing one node; graph ops produce new nodes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  long size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const Array& value() const { return node_->value; }
  Array& value_mut() { return node_->value; }

  // Gradient view: zeros if backward never touched this tensor.
  Array grad() const;
  bool has_grad() const { return node_->grad_live(); }
  void zero_grad() { node_->grad.resize(0); }
  void accumulate_grad(const Array& g) { node_->accumulate(g); }

  // Scalar access.
  double item() const;
  // Multi-index element access (tests and tooling).
  double at(std::initializer_list<int> index) const;

  // Reverse pass from a scalar loss. Visits each reachable node once in
  // reverse topological order; populates grads on requires_grad leaves.
  void backward() const;

  // Same values, detached from the graph (no history, no grad).
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

std::shared_ptr<Node> make_leaf(Shape shape, Array value, bool requires_grad);

// Creates the output node of an op: hooks parents and the adjoint rule iff
// any input requires grad (otherwise the result is a constant leaf).
Tensor make_op(Shape shape, Array value, std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backprop);

}  // namespace detail

long flat_index(const Shape& shape, std::initializer_list<int> index);

}  // namespace dysk
