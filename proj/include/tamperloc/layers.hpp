#pragma once

#include <string>
#include <vector>

#include "tamperloc/ops.hpp"
#include "tamperloc/rng.hpp"
#include "tamperloc/tensor.hpp"

namespace tamperloc {

enum class InitKind { trunc_normal, zeros, ones, layer_scale };

struct ParamInfo {
  std::string name;
  Tensor tensor;
  InitKind init = InitKind::zeros;
  bool decay_exempt = false;
};

// Owns every learnable tensor of a network in registration order; the order
// is the checkpoint order.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, const Shape4& shape, InitKind init,
             bool decay_exempt);
  Index size() const { return static_cast<Index>(params_.size()); }
  ParamInfo& at(Index i) { return params_[static_cast<size_t>(i)]; }
  const ParamInfo& at(Index i) const { return params_[static_cast<size_t>(i)]; }
  const std::vector<ParamInfo>& all() const { return params_; }
  Index total_scalars() const;
  // fills every tensor from a per-parameter stream derived off (seed, name)
  void initialize(std::uint64_t seed, Scalar layer_scale_value);
  void zero_grads();

 private:
  std::vector<ParamInfo> params_;
};

struct Conv2dLayer {
  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, const std::string& prefix, Index in_ch,
              Index out_ch, Index k, Index stride, Index pad,
              Index groups = 1);
  Tensor forward(const Tensor& x) const;
  ConvParams p;
  bool depthwise = false;
};

struct LayerNormLayer {
  LayerNormLayer() = default;
  LayerNormLayer(ParamRegistry& reg, const std::string& prefix, Index ch);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  Tensor gamma, beta;
};

// y = x + ls * pw2(gelu(pw1(ln(dw7x7(x)))))
struct ConvNeXtBlock {
  ConvNeXtBlock() = default;
  ConvNeXtBlock(ParamRegistry& reg, const std::string& prefix, Index ch);
  Tensor forward(const Tensor& x) const;
  Conv2dLayer dw, pw1, pw2;
  LayerNormLayer ln;
  Tensor ls;
};

// generic-CNN ablation arm: y = x + conv3x3(gelu(conv3x3(x)))
struct PlainBlock {
  PlainBlock() = default;
  PlainBlock(ParamRegistry& reg, const std::string& prefix, Index ch);
  Tensor forward(const Tensor& x) const;
  Conv2dLayer c1, c2;
};

// layer_norm then 2x2 stride-2 conv doubling the channel count
struct DownsampleLayer {
  DownsampleLayer() = default;
  DownsampleLayer(ParamRegistry& reg, const std::string& prefix, Index in_ch);
  Tensor forward(const Tensor& x) const;
  LayerNormLayer ln;
  Conv2dLayer conv;
};

}  // namespace tamperloc
