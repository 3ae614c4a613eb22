#include "copp/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>

#include "copp/errors.hpp"

namespace copp::ad {

namespace {

std::atomic<std::uint64_t> next_id{1};

NodePtr new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(new_node(node_->shape, node_->data, false)); }

void Tensor::backward() const {
  if (size() != 1) throw DomainError("backward() needs a scalar loss, got " + shape_string(shape()));
  for (auto& lg : ad::backward(*this)) {
    auto& dst = lg.leaf->grad;
    if (dst.empty()) {
      dst = std::move(lg.grad);
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += lg.grad[i];
    }
  }
}

void GradStore::accumulate(const Node& node, std::span<const double> g) {
  auto& buf = buffer(node);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

std::vector<double>& GradStore::buffer(const Node& node) {
  auto [it, inserted] = grads_.try_emplace(&node);
  if (inserted) it->second.assign(node.data.size(), 0.0);
  return it->second;
}

std::vector<double> GradStore::take(const Node& node) {
  auto it = grads_.find(&node);
  if (it == grads_.end()) return {};
  auto g = std::move(it->second);
  grads_.erase(it);
  return g;
}

std::vector<LeafGradient> backward(const Tensor& root, std::span<const double> seed) {
  if (!root.requires_grad()) return {};
  if (seed.empty() && root.size() != 1) {
    throw DomainError("backward() needs a scalar loss, got " + shape_string(root.shape()));
  }
  if (!seed.empty() && seed.size() != root.size()) {
    throw DimensionError("backward seed length does not match " + shape_string(root.shape()));
  }

  std::vector<NodePtr> order;
  std::vector<NodePtr> stack{root.node()};
  std::unordered_map<const Node*, bool> seen{{root.node().get(), true}};
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.try_emplace(in.get(), true).second) stack.push_back(in);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const NodePtr& a, const NodePtr& b) { return a->id > b->id; });

  GradStore store;
  if (seed.empty()) {
    store.buffer(*root.node())[0] = 1.0;
  } else {
    store.accumulate(*root.node(), seed);
  }

  for (const auto& n : order) {
    if (n->backward && store.contains(*n)) {
      const auto g = store.take(*n);
      n->backward(*n, g, store);
    }
  }
  // Leaves in ascending id order so reductions over them are reproducible.
  std::vector<LeafGradient> leaves;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->backward && store.contains(**it)) leaves.push_back({*it, store.take(**it)});
  }
  return leaves;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  auto node = new_node(std::move(shape), std::move(data), needs_grad);
  node->op = op;
  if (needs_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace copp::ad
