#pragma once

#include <array>
#include <string>
#include <vector>

#include "tamperloc/layers.hpp"

namespace tamperloc {

struct EncoderConfig {
  Index C = 128;
  std::array<Index, 4> blocks{3, 3, 27, 3};
  Scalar layer_scale_init = 1e-6;
  // "convnext" or "plain" (generic 3x3 residual arm, not ResNet-101)
  std::string block_kind = "convnext";

  static EncoderConfig desk();
  void validate() const;
};

// multi-scale features: x_i has 2^{i-1}*C channels at 1/2^{i+1} resolution
struct StageOutputs {
  Tensor x0, x1, x2, x3, x4;
};

struct EncoderStage {
  std::vector<ConvNeXtBlock> cx;
  std::vector<PlainBlock> plain;
  Tensor forward(Tensor x) const;
};

class Encoder {
 public:
  Encoder(ParamRegistry& reg, const EncoderConfig& cfg);

  // conv 4x4 stride 4 to C channels + layer norm; wants H, W % 32 == 0
  Tensor stem(const Tensor& img) const;
  StageOutputs encode(const Tensor& img) const;

  // closed-form shape chain for X1..X4
  static std::array<Shape4, 4> stage_shapes(Index n, Index c, Index h,
                                            Index w);

  EncoderConfig cfg;
  Conv2dLayer stem_conv;
  LayerNormLayer stem_ln;
  std::array<EncoderStage, 4> stages;
  std::array<DownsampleLayer, 3> downsamples;
};

}  // namespace tamperloc
