#pragma once

// Dense f64 tensor with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap shared handle onto a graph node. Ops executed while
// grad mode is on record their inputs and a backward closure on the result
// node; `backward()` linearises the reachable graph into a Tape (reverse
// topological order), runs each closure exactly once and then releases the
// recorded edges, so intermediate buffers are freed with the last handle.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace splice::nc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  // Leading extent of a rank-2 tensor (1 for vectors).
  std::size_t rows() const;
  // Trailing extent (1 for scalars).
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access; bypasses the graph (initialisation, optimisers).
  std::span<double> data();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach() const;
  // Same storage layout under a new shape; gradient flows through.
  Tensor reshape(Shape shape) const;

  // Reverse pass from a scalar (numel()==1) tensor.
  void backward() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(detail::Node&)>);
};

// Builds an op output. The backward closure is recorded only when grad mode
// is enabled and at least one input requires gradients.
Tensor make_op_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> backward);

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

// Ordered record of the nodes reachable from a root, in topological order
// (inputs before outputs). Replaying it backwards visits each node once.
class Tape {
 public:
  explicit Tape(const Tensor& root);
  std::size_t size() const { return nodes_.size(); }
  // Seeds d(root)=1, runs every backward closure in reverse order and frees
  // the recorded edges of non-leaf nodes. Returns the number of closures run.
  std::size_t run();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

}  // namespace splice::nc
