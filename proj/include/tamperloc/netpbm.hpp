#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tamperloc/types.hpp"

namespace tamperloc {

// 8-bit image, row-major, channels interleaved. channels is 1 (mask/gray)
// or 3 (RGB).
struct ImageU8 {
  Index h = 0;
  Index w = 0;
  Index channels = 1;
  std::vector<std::uint8_t> v;

  static ImageU8 make(Index h, Index w, Index channels, std::uint8_t fill = 0);

  std::uint8_t& at(Index y, Index x, Index c = 0) {
    return v[static_cast<size_t>((y * w + x) * channels + c)];
  }
  std::uint8_t at(Index y, Index x, Index c = 0) const {
    return v[static_cast<size_t>((y * w + x) * channels + c)];
  }
  Index pixels() const { return h * w; }
  bool same_dims(const ImageU8& o) const { return h == o.h && w == o.w; }
};

// Binary netpbm only: P6 for 3-channel, P5 for 1-channel, maxval 255.
ImageU8 read_netpbm(const std::string& path);
void write_netpbm(const std::string& path, const ImageU8& img);

}  // namespace tamperloc
