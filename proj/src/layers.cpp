#include "tamperloc/layers.hpp"

namespace tamperloc {

Tensor ParamRegistry::add(const std::string& name, const Shape4& shape,
                          InitKind init, bool decay_exempt) {
  for (const ParamInfo& p : params_) {
    if (p.name == name) {
      throw ConfigError("duplicate parameter name " + name);
    }
  }
  ParamInfo info;
  info.name = name;
  info.tensor = Tensor::zeros(shape);
  info.tensor.set_requires_grad(true);
  info.init = init;
  info.decay_exempt = decay_exempt;
  params_.push_back(info);
  return params_.back().tensor;
}

Index ParamRegistry::total_scalars() const {
  Index total = 0;
  for (const ParamInfo& p : params_) total += p.tensor.numel();
  return total;
}

void ParamRegistry::initialize(std::uint64_t seed, Scalar layer_scale_value) {
  RngStream root(seed);
  for (ParamInfo& p : params_) {
    ArrayX& d = p.tensor.raw_data();
    switch (p.init) {
      case InitKind::trunc_normal: {
        RngStream rng = root.derive(p.name);
        for (Index i = 0; i < d.size(); ++i) {
          d[i] = rng.truncated_normal(0.02);
        }
        break;
      }
      case InitKind::zeros:
        d.setZero();
        break;
      case InitKind::ones:
        d.setConstant(1.0);
        break;
      case InitKind::layer_scale:
        d.setConstant(layer_scale_value);
        break;
    }
  }
}

void ParamRegistry::zero_grads() {
  for (ParamInfo& p : params_) p.tensor.zero_grad();
}

Conv2dLayer::Conv2dLayer(ParamRegistry& reg, const std::string& prefix,
                         Index in_ch, Index out_ch, Index k, Index stride,
                         Index pad, Index groups) {
  if (in_ch % groups != 0 || out_ch % groups != 0) {
    throw ConfigError(prefix + ": channels " + std::to_string(in_ch) + "->" +
                      std::to_string(out_ch) + " not divisible by groups " +
                      std::to_string(groups));
  }
  p.weight = reg.add(prefix + ".w", {out_ch, in_ch / groups, k, k},
                     InitKind::trunc_normal, false);
  p.bias = reg.add(prefix + ".b", {1, out_ch, 1, 1}, InitKind::zeros, true);
  p.stride = stride;
  p.padding = pad;
  p.groups = groups;
  depthwise = groups > 1 && groups == in_ch && groups == out_ch;
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return depthwise ? depthwise_conv2d(x, p) : conv2d(x, p);
}

LayerNormLayer::LayerNormLayer(ParamRegistry& reg, const std::string& prefix,
                               Index ch) {
  gamma = reg.add(prefix + ".gamma", {1, ch, 1, 1}, InitKind::ones, true);
  beta = reg.add(prefix + ".beta", {1, ch, 1, 1}, InitKind::zeros, true);
}

ConvNeXtBlock::ConvNeXtBlock(ParamRegistry& reg, const std::string& prefix,
                             Index ch)
    : dw(reg, prefix + ".dw", ch, ch, 7, 1, 3, ch),
      pw1(reg, prefix + ".pw1", ch, 4 * ch, 1, 1, 0),
      pw2(reg, prefix + ".pw2", 4 * ch, ch, 1, 1, 0),
      ln(reg, prefix + ".ln", ch) {
  ls = reg.add(prefix + ".ls", {1, ch, 1, 1}, InitKind::layer_scale, true);
}

Tensor ConvNeXtBlock::forward(const Tensor& x) const {
  Tensor h = dw.forward(x);
  h = ln.forward(h);
  h = pw1.forward(h);
  h = gelu(h);
  h = pw2.forward(h);
  h = channel_scale(h, ls);
  return add(x, h);
}

PlainBlock::PlainBlock(ParamRegistry& reg, const std::string& prefix,
                       Index ch)
    : c1(reg, prefix + ".c1", ch, ch, 3, 1, 1),
      c2(reg, prefix + ".c2", ch, ch, 3, 1, 1) {}

Tensor PlainBlock::forward(const Tensor& x) const {
  return add(x, c2.forward(gelu(c1.forward(x))));
}

DownsampleLayer::DownsampleLayer(ParamRegistry& reg, const std::string& prefix,
                                 Index in_ch)
    : ln(reg, prefix + ".ln", in_ch),
      conv(reg, prefix + ".conv", in_ch, 2 * in_ch, 2, 2, 0) {}

Tensor DownsampleLayer::forward(const Tensor& x) const {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw DimensionError("downsample needs even spatial dims, got " +
                         std::to_string(x.h()) + "x" + std::to_string(x.w()));
  }
  return conv.forward(ln.forward(x));
}

}  // namespace tamperloc
