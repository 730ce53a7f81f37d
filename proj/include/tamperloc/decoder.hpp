#pragma once

#include <vector>

#include "tamperloc/encoder.hpp"
#include "tamperloc/netpbm.hpp"

namespace tamperloc {

struct DecoderConfig {
  Index fpn_channels = 128;
  std::vector<Index> ppm_bins{1, 2, 3, 6};
  // fuses the contiguous run {X4 .. X_fuse_lowest}; 4 = X4 only
  Index fuse_lowest = 1;

  static DecoderConfig desk();
  void validate() const;
  Index fused_count() const { return 5 - fuse_lowest; }
};

struct LocalizationMap {
  Tensor probs;   // (N,1,H,W), detached tamper probabilities
  Tensor logits;  // (N,2,H,W), channel 1 = tampered
};

class Decoder {
 public:
  Decoder(ParamRegistry& reg, const DecoderConfig& cfg, Index enc_c);

  // pooled-pyramid context over X4, back at X4's spatial size
  Tensor ppm(const Tensor& x4) const;
  // i in [fuse_lowest, 3]: upsample Y_{i+1} x2, project X_i, concat, 3x3
  Tensor lateral(Index i, const Tensor& y_next, const Tensor& x_i) const;
  // ys ordered deepest first; resized to the finest, classified, upsampled
  LocalizationMap fuse_head(const std::vector<Tensor>& ys, Index target_h,
                            Index target_w) const;
  LocalizationMap localize(const StageOutputs& s, Index target_h,
                           Index target_w) const;

  DecoderConfig cfg;
  Index enc_c = 0;
  std::vector<Conv2dLayer> ppm_branch;
  Conv2dLayer ppm_fuse;
  struct LateralPair {
    Conv2dLayer proj, merge;
  };
  std::vector<LateralPair> laterals;  // index 0 is i=3, then 2, then 1
  Conv2dLayer head_fuse, head_cls;
};

// 8-bit map exports: probabilities as round(255*p), masks as {0,255}
ImageU8 probs_to_image(const Tensor& probs, Index n);
ImageU8 probs_to_mask(const Tensor& probs, Index n, Scalar threshold);

}  // namespace tamperloc
