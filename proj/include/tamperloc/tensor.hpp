#pragma once

#include "tamperloc/types.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace tamperloc {

class Tensor;

// Backward hooks receive the finished output node and scatter its grad into
// the parents (reachable through Tensor::parent). They must not capture the
// output tensor itself, or the graph would never free.
using BackwardFn = std::function<void(const Tensor& out)>;

namespace detail {
struct TensorNode {
  Shape4 shape;
  ArrayX data;
  ArrayX grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward;
};
}  // namespace detail

// Dense (N, C, H, W) array of doubles with an optional gradient buffer.
// Tensors are cheap shared handles; the payload is written once by the op
// that produces it and never mutated afterwards (parameters are the single
// exception: the optimizer rewrites them between steps via raw_data()).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape4& shape, bool requires_grad = false);
  static Tensor full(const Shape4& shape, Scalar value);
  static Tensor from_data(const Shape4& shape, ArrayX data);

  // Graph-building constructor used by every differentiable op.
  static Tensor make(const Shape4& shape, ArrayX data, std::vector<Tensor> parents,
                     BackwardFn backward);

  bool defined() const { return node_ != nullptr; }

  const Shape4& shape() const { return node_->shape; }
  Index n() const { return node_->shape.n; }
  Index c() const { return node_->shape.c; }
  Index h() const { return node_->shape.h; }
  Index w() const { return node_->shape.w; }
  Index numel() const { return node_->shape.numel(); }

  const ArrayX& data() const { return node_->data; }
  ArrayX& raw_data() { return node_->data; }

  Index offset(Index n, Index c, Index y, Index x) const {
    const Shape4& s = node_->shape;
    return ((n * s.c + c) * s.h + y) * s.w + x;
  }
  Scalar at(Index n, Index c, Index y, Index x) const {
    return node_->data[offset(n, c, y, x)];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return node_->grad.size() > 0; }
  const ArrayX& grad() const { return node_->grad; }
  void accumulate_grad(const ArrayX& g);
  void zero_grad() { node_->grad.resize(0); }

  Index parent_count() const { return static_cast<Index>(node_->parents.size()); }
  Tensor parent(Index i) const { return node_->parents[static_cast<size_t>(i)]; }

  // Reverse pass from this tensor, seeding its grad with ones (so a backward
  // from any tensor differentiates the sum of its elements).
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace tamperloc
