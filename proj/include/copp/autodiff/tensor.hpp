#pragma once

// Dense fp64 tensors recorded on an implicit tape for reverse-mode
// differentiation. Every operation creates a node whose id is larger than the
// ids of its inputs, so sorting reachable nodes by id gives a valid reverse
// topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace copp::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class GradStore;
struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Propagates the output gradient `g` of `self` into its inputs via `store`.
using BackwardFn = std::function<void(const Node& self, std::span<const double> g, GradStore& store)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // leaves only; filled by Tensor::backward
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  BackwardFn backward;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }
  /// Leading dimension for 2-D tensors; 1 for vectors.
  std::size_t rows() const { return rank() == 2 ? dim(0) : 1; }
  std::size_t cols() const { return rank() == 2 ? dim(1) : dim(0); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse sweep from a scalar; leaf gradients accumulate into grad().
  void backward() const;

  const NodePtr& node() const { return node_; }
  std::uint64_t id() const { return node_->id; }

 private:
  NodePtr node_;
};

/// Gradient buffers live here during one backward sweep, keyed by node.
class GradStore {
 public:
  void accumulate(const Node& node, std::span<const double> g);
  std::vector<double>& buffer(const Node& node);
  bool contains(const Node& node) const { return grads_.contains(&node); }
  std::vector<double> take(const Node& node);

 private:
  std::unordered_map<const Node*, std::vector<double>> grads_;
};

/// Leaf gradients produced by a sweep, in ascending node-id order.
struct LeafGradient {
  NodePtr leaf;
  std::vector<double> grad;
};

/// Runs the reverse sweep from `root` seeded with `seed` (ones when empty and
/// root is scalar). Intermediate buffers are released as soon as consumed.
std::vector<LeafGradient> backward(const Tensor& root, std::span<const double> seed = {});

/// Builds an op node; returns a constant (no closure kept) when no input
/// requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

}  // namespace copp::ad
