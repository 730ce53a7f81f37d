#include "tamperloc/jpegcodec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tamperloc {

namespace {

constexpr int kBaseLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// orthonormal 8-point DCT basis; dct_mat[u][x]
struct DctBasis {
  double m[8][8];
  DctBasis() {
    const double pi = std::acos(-1.0);
    for (int u = 0; u < 8; ++u) {
      double scale = (u == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        m[u][x] = scale * std::cos((2 * x + 1) * u * pi / 16.0);
      }
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

// float plane with replicate padding baked in
struct Plane {
  Index h = 0, w = 0;
  std::vector<double> v;
  double& at(Index y, Index x) { return v[static_cast<size_t>(y * w + x)]; }
  double at(Index y, Index x) const {
    return v[static_cast<size_t>(y * w + x)];
  }
};

Plane make_plane(Index h, Index w) {
  Plane p;
  p.h = h;
  p.w = w;
  p.v.assign(static_cast<size_t>(h * w), 0.0);
  return p;
}

// DCT -> quantize -> dequantize -> IDCT, one 8x8 block in place
void lossy_block(Plane& p, Index by, Index bx, const std::array<int, 64>& q) {
  const DctBasis& b = basis();
  double f[8][8];
  double t[8][8];
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      f[y][x] = p.at(by + y, bx + x) - 128.0;
    }
  }
  // F = A f A^T
  for (int u = 0; u < 8; ++u) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += b.m[u][y] * f[y][x];
      t[u][x] = acc;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int vv = 0; vv < 8; ++vv) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += t[u][x] * b.m[vv][x];
      double step = static_cast<double>(q[static_cast<size_t>(u * 8 + vv)]);
      f[u][vv] = std::round(acc / step) * step;
    }
  }
  // f = A^T F A, shifted back
  for (int y = 0; y < 8; ++y) {
    for (int vv = 0; vv < 8; ++vv) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += b.m[u][y] * f[u][vv];
      t[y][vv] = acc;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int vv = 0; vv < 8; ++vv) acc += t[y][vv] * b.m[vv][x];
      p.at(by + y, bx + x) = acc + 128.0;
    }
  }
}

void lossy_plane(Plane& p, const std::array<int, 64>& q) {
  for (Index by = 0; by < p.h; by += 8) {
    for (Index bx = 0; bx < p.w; bx += 8) {
      lossy_block(p, by, bx, q);
    }
  }
}

std::uint8_t clamp_u8(double x) {
  double r = std::round(x);
  if (r < 0.0) r = 0.0;
  if (r > 255.0) r = 255.0;
  return static_cast<std::uint8_t>(r);
}

}  // namespace

QuantTables jpeg_quant_tables(int quality) {
  if (quality < 1 || quality > 100) {
    throw ConfigError("jpeg quality " + std::to_string(quality) +
                      " out of range [1,100]");
  }
  int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTables t;
  for (int i = 0; i < 64; ++i) {
    t.luma[static_cast<size_t>(i)] =
        std::clamp((kBaseLuma[i] * scale + 50) / 100, 1, 255);
    t.chroma[static_cast<size_t>(i)] =
        std::clamp((kBaseChroma[i] * scale + 50) / 100, 1, 255);
  }
  return t;
}

ImageU8 jpeg_roundtrip(const ImageU8& img, int quality) {
  if (img.channels != 3) {
    throw ConfigError("jpeg round trip wants a 3-channel image, got " +
                      std::to_string(img.channels));
  }
  QuantTables qt = jpeg_quant_tables(quality);

  // pad to full 16x16 macroblocks so the 4:2:0 chroma planes tile into 8x8
  // blocks exactly
  Index ph = (img.h + 15) / 16 * 16;
  Index pw = (img.w + 15) / 16 * 16;
  Plane yp = make_plane(ph, pw);
  Plane cb = make_plane(ph / 2, pw / 2);
  Plane cr = make_plane(ph / 2, pw / 2);

  for (Index y = 0; y < ph; ++y) {
    Index sy = std::min(y, img.h - 1);
    for (Index x = 0; x < pw; ++x) {
      Index sx = std::min(x, img.w - 1);
      double r = img.at(sy, sx, 0);
      double g = img.at(sy, sx, 1);
      double b = img.at(sy, sx, 2);
      yp.at(y, x) = 0.299 * r + 0.587 * g + 0.114 * b;
      // chroma accumulated below via 2x2 average
      double cbv = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
      double crv = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
      cb.at(y / 2, x / 2) += 0.25 * cbv;
      cr.at(y / 2, x / 2) += 0.25 * crv;
    }
  }

  lossy_plane(yp, qt.luma);
  lossy_plane(cb, qt.chroma);
  lossy_plane(cr, qt.chroma);

  ImageU8 out = ImageU8::make(img.h, img.w, 3);
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      double yv = yp.at(y, x);
      double cbv = cb.at(y / 2, x / 2) - 128.0;
      double crv = cr.at(y / 2, x / 2) - 128.0;
      out.at(y, x, 0) = clamp_u8(yv + 1.402 * crv);
      out.at(y, x, 1) = clamp_u8(yv - 0.344136 * cbv - 0.714136 * crv);
      out.at(y, x, 2) = clamp_u8(yv + 1.772 * cbv);
    }
  }
  return out;
}

Scalar image_psnr(const ImageU8& a, const ImageU8& b) {
  if (!a.same_dims(b) || a.channels != b.channels) {
    throw DimensionError("psnr dims mismatch: " + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + "x" +
                         std::to_string(a.channels) + " vs " +
                         std::to_string(b.h) + "x" + std::to_string(b.w) +
                         "x" + std::to_string(b.channels));
  }
  double se = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<Scalar>::infinity();
  double mse = se / static_cast<double>(a.v.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace tamperloc
