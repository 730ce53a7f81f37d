#include "tamperloc/decoder.hpp"

#include <cmath>

namespace tamperloc {

DecoderConfig DecoderConfig::desk() {
  DecoderConfig cfg;
  cfg.fpn_channels = 8;
  cfg.ppm_bins = {1, 2};
  return cfg;
}

void DecoderConfig::validate() const {
  if (ppm_bins.empty()) throw ConfigError("ppm_bins is empty");
  Index prev = 0;
  for (Index b : ppm_bins) {
    if (b <= prev) {
      throw ConfigError("ppm_bins must be strictly increasing positives");
    }
    prev = b;
  }
  Index nb = static_cast<Index>(ppm_bins.size());
  if (fpn_channels < nb || fpn_channels % nb != 0) {
    throw ConfigError("fpn_channels " + std::to_string(fpn_channels) +
                      " must be a positive multiple of the bin count " +
                      std::to_string(nb));
  }
  if (fuse_lowest < 1 || fuse_lowest > 4) {
    throw ConfigError("fuse_lowest " + std::to_string(fuse_lowest) +
                      " outside [1,4]");
  }
}

Decoder::Decoder(ParamRegistry& reg, const DecoderConfig& config, Index c)
    : cfg(config), enc_c(c) {
  cfg.validate();
  Index x4_ch = 8 * enc_c;
  Index nb = static_cast<Index>(cfg.ppm_bins.size());
  Index branch_ch = cfg.fpn_channels / nb;
  for (Index k = 0; k < nb; ++k) {
    ppm_branch.emplace_back(reg, "dec.ppm.b" + std::to_string(k), x4_ch,
                            branch_ch, 1, 1, 0);
  }
  ppm_fuse = Conv2dLayer(reg, "dec.ppm.fuse", x4_ch + cfg.fpn_channels,
                         cfg.fpn_channels, 3, 1, 1);
  for (Index i = 3; i >= cfg.fuse_lowest; --i) {
    LateralPair lat;
    Index xi_ch = enc_c << (i - 1);
    lat.proj = Conv2dLayer(reg, "dec.l" + std::to_string(i) + ".proj", xi_ch,
                           cfg.fpn_channels, 1, 1, 0);
    lat.merge = Conv2dLayer(reg, "dec.l" + std::to_string(i) + ".merge",
                            2 * cfg.fpn_channels, cfg.fpn_channels, 3, 1, 1);
    laterals.push_back(lat);
  }
  head_fuse = Conv2dLayer(reg, "dec.head.fuse",
                          cfg.fpn_channels * cfg.fused_count(),
                          cfg.fpn_channels, 3, 1, 1);
  head_cls = Conv2dLayer(reg, "dec.head.cls", cfg.fpn_channels, 2, 1, 1, 0);
}

Tensor Decoder::ppm(const Tensor& x4) const {
  std::vector<Tensor> parts{x4};
  for (size_t k = 0; k < cfg.ppm_bins.size(); ++k) {
    Tensor pooled = adaptive_avg_pool(x4, cfg.ppm_bins[k]);
    Tensor proj = ppm_branch[k].forward(pooled);
    parts.push_back(bilinear_resize(proj, x4.h(), x4.w()));
  }
  return ppm_fuse.forward(concat_channels(parts));
}

Tensor Decoder::lateral(Index i, const Tensor& y_next,
                        const Tensor& x_i) const {
  if (i < cfg.fuse_lowest || i > 3) {
    throw ConfigError("lateral index " + std::to_string(i) +
                      " outside the configured run [" +
                      std::to_string(cfg.fuse_lowest) + ",3]");
  }
  if (y_next.n() != x_i.n() || 2 * y_next.h() != x_i.h() ||
      2 * y_next.w() != x_i.w()) {
    throw DimensionError("lateral L" + std::to_string(i) + ": Y " +
                         y_next.shape().str() + " must be exactly half of X " +
                         x_i.shape().str());
  }
  const LateralPair& lat = laterals[static_cast<size_t>(3 - i)];
  Tensor up = bilinear_resize(y_next, x_i.h(), x_i.w());
  Tensor proj = lat.proj.forward(x_i);
  return lat.merge.forward(concat_channels({up, proj}));
}

LocalizationMap Decoder::fuse_head(const std::vector<Tensor>& ys,
                                   Index target_h, Index target_w) const {
  if (ys.empty()) throw ConfigError("fuse head got an empty feature list");
  Index fh = ys.back().h(), fw = ys.back().w();
  std::vector<Tensor> aligned;
  for (const Tensor& y : ys) aligned.push_back(bilinear_resize(y, fh, fw));
  Tensor fused = head_fuse.forward(concat_channels(aligned));
  Tensor logits = bilinear_resize(head_cls.forward(fused), target_h, target_w);
  Tensor sm = softmax_channels(logits);

  LocalizationMap map;
  map.logits = logits;
  map.probs = Tensor::zeros({sm.n(), 1, sm.h(), sm.w()});
  Index hw = sm.h() * sm.w();
  const ArrayX& sd = sm.data();
  ArrayX& pd = map.probs.raw_data();
  for (Index n = 0; n < sm.n(); ++n) {
    pd.segment(n * hw, hw) = sd.segment((n * 2 + 1) * hw, hw);
  }
  return map;
}

LocalizationMap Decoder::localize(const StageOutputs& s, Index target_h,
                                  Index target_w) const {
  Tensor y = ppm(s.x4);
  std::vector<Tensor> ys{y};
  const Tensor* xs[4] = {&s.x1, &s.x2, &s.x3, &s.x4};
  for (Index i = 3; i >= cfg.fuse_lowest; --i) {
    y = lateral(i, y, *xs[i - 1]);
    ys.push_back(y);
  }
  return fuse_head(ys, target_h, target_w);
}

ImageU8 probs_to_image(const Tensor& probs, Index n) {
  if (probs.c() != 1 || n < 0 || n >= probs.n()) {
    throw ConfigError("probs_to_image wants a (N,1,H,W) map and a valid "
                      "sample index");
  }
  ImageU8 img = ImageU8::make(probs.h(), probs.w(), 1);
  Index hw = probs.h() * probs.w();
  const ArrayX& d = probs.data();
  for (Index i = 0; i < hw; ++i) {
    double v = std::round(255.0 * d[n * hw + i]);
    img.v[static_cast<size_t>(i)] =
        static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

ImageU8 probs_to_mask(const Tensor& probs, Index n, Scalar threshold) {
  if (probs.c() != 1 || n < 0 || n >= probs.n()) {
    throw ConfigError("probs_to_mask wants a (N,1,H,W) map and a valid "
                      "sample index");
  }
  ImageU8 img = ImageU8::make(probs.h(), probs.w(), 1);
  Index hw = probs.h() * probs.w();
  const ArrayX& d = probs.data();
  for (Index i = 0; i < hw; ++i) {
    img.v[static_cast<size_t>(i)] = d[n * hw + i] > threshold ? 255 : 0;
  }
  return img;
}

}  // namespace tamperloc
