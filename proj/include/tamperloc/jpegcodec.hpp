#pragma once

#include <array>

#include "tamperloc/netpbm.hpp"
#include "tamperloc/types.hpp"

namespace tamperloc {

// Quantization tables for a given quality in [1,100], scaled from the
// baseline luma/chroma tables. Row-major 8x8, entries in [1,255].
struct QuantTables {
  std::array<int, 64> luma;
  std::array<int, 64> chroma;
};
QuantTables jpeg_quant_tables(int quality);

// In-memory baseline-style round trip: RGB -> YCbCr, 4:2:0 subsample,
// blockwise DCT, quantize, dequantize, IDCT, upsample, back to RGB.
// Entropy coding is lossless and therefore skipped. Input must be
// 3-channel.
ImageU8 jpeg_roundtrip(const ImageU8& img, int quality);

// PSNR in dB over all channels; returns +inf for identical images.
Scalar image_psnr(const ImageU8& a, const ImageU8& b);

}  // namespace tamperloc
