#include "tamperloc/encoder.hpp"

namespace tamperloc {

EncoderConfig EncoderConfig::desk() {
  EncoderConfig cfg;
  cfg.C = 8;
  cfg.blocks = {1, 1, 2, 1};
  return cfg;
}

void EncoderConfig::validate() const {
  if (C < 2 || C % 2 != 0) {
    throw ConfigError("encoder C must be even and >= 2, got " +
                      std::to_string(C));
  }
  for (Index b : blocks) {
    if (b < 1) {
      throw ConfigError("blocks_per_stage entries must be >= 1, got " +
                        std::to_string(b));
    }
  }
  if (block_kind != "convnext" && block_kind != "plain") {
    throw ConfigError("unknown block kind '" + block_kind +
                      "' (want convnext or plain)");
  }
}

Tensor EncoderStage::forward(Tensor x) const {
  for (const ConvNeXtBlock& b : cx) x = b.forward(x);
  for (const PlainBlock& b : plain) x = b.forward(x);
  return x;
}

Encoder::Encoder(ParamRegistry& reg, const EncoderConfig& config)
    : cfg(config) {
  cfg.validate();
  stem_conv = Conv2dLayer(reg, "enc.stem.conv", 3, cfg.C, 4, 4, 0);
  stem_ln = LayerNormLayer(reg, "enc.stem.ln", cfg.C);
  for (Index s = 0; s < 4; ++s) {
    Index width = cfg.C << s;
    if (s > 0) {
      downsamples[static_cast<size_t>(s - 1)] = DownsampleLayer(
          reg, "enc.ds" + std::to_string(s + 1), width / 2);
    }
    for (Index b = 0; b < cfg.blocks[static_cast<size_t>(s)]; ++b) {
      std::string prefix =
          "enc.s" + std::to_string(s + 1) + ".b" + std::to_string(b);
      if (cfg.block_kind == "convnext") {
        stages[static_cast<size_t>(s)].cx.emplace_back(reg, prefix, width);
      } else {
        stages[static_cast<size_t>(s)].plain.emplace_back(reg, prefix, width);
      }
    }
  }
}

Tensor Encoder::stem(const Tensor& img) const {
  if (img.h() % 32 != 0 || img.w() % 32 != 0) {
    throw DimensionError("input " + std::to_string(img.h()) + "x" +
                         std::to_string(img.w()) +
                         ": spatial dims must be multiples of 32");
  }
  return stem_ln.forward(stem_conv.forward(img));
}

StageOutputs Encoder::encode(const Tensor& img) const {
  StageOutputs out;
  out.x0 = stem(img);
  out.x1 = stages[0].forward(out.x0);
  out.x2 = stages[1].forward(downsamples[0].forward(out.x1));
  out.x3 = stages[2].forward(downsamples[1].forward(out.x2));
  out.x4 = stages[3].forward(downsamples[2].forward(out.x3));
  return out;
}

std::array<Shape4, 4> Encoder::stage_shapes(Index n, Index c, Index h,
                                            Index w) {
  std::array<Shape4, 4> shapes;
  for (Index i = 1; i <= 4; ++i) {
    shapes[static_cast<size_t>(i - 1)] =
        Shape4{n, (Index(1) << (i - 1)) * c, h >> (i + 1), w >> (i + 1)};
  }
  return shapes;
}

}  // namespace tamperloc
