#include "tamperloc/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace tamperloc {

namespace {

void check_shape(const Shape4& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw DimensionError("tensor shape " + s.str() + ": all dimensions must be >= 1");
  }
}

}  // namespace

Tensor Tensor::zeros(const Shape4& shape, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data = ArrayX::Zero(shape.numel());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(const Shape4& shape, Scalar value) {
  check_shape(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data = ArrayX::Constant(shape.numel(), value);
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(const Shape4& shape, ArrayX data) {
  check_shape(shape);
  if (data.size() != shape.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::make(const Shape4& shape, ArrayX data, std::vector<Tensor> parents,
                    BackwardFn backward) {
  Tensor t = from_data(shape, std::move(data));
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  t.node_->requires_grad = needs;
  t.node_->parents = std::move(parents);
  t.node_->backward = std::move(backward);
  return t;
}

void Tensor::accumulate_grad(const ArrayX& g) {
  if (g.size() != numel()) {
    throw DimensionError("gradient length " + std::to_string(g.size()) +
                         " does not match tensor shape " + shape().str());
  }
  if (node_->grad.size() == 0) {
    node_->grad = g;
  } else {
    node_->grad += g;
  }
}

void Tensor::backward() const {
  // Post-order DFS; the visit order is fixed by graph construction, so grad
  // accumulation order is deterministic.
  std::vector<Tensor> topo;
  std::unordered_set<const detail::TensorNode*> seen;
  std::vector<std::pair<Tensor, size_t>> stack;
  stack.emplace_back(*this, 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (next < t.node_->parents.size()) {
      Tensor p = t.node_->parents[next++];
      if (p.requires_grad() && !seen.count(p.node_.get())) {
        seen.insert(p.node_.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      topo.push_back(t);
      stack.pop_back();
    }
  }

  node_->grad = ArrayX::Ones(numel());
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Tensor& t = *it;
    if (t.node_->backward && t.node_->grad.size() > 0) {
      t.node_->backward(t);
    }
  }
}

}  // namespace tamperloc
