#include "tamperloc/dataforge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tamperloc/jpegcodec.hpp"
#include "tamperloc/parallel.hpp"

namespace tamperloc {

namespace {

std::string fmt_g(Scalar x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

std::uint8_t clamp_round_u8(double x) {
  double r = std::round(x);
  if (r < 0.0) r = 0.0;
  if (r > 255.0) r = 255.0;
  return static_cast<std::uint8_t>(r);
}

void require_rgb(const ImageU8& img, const char* who) {
  if (img.channels != 3) {
    throw ConfigError(std::string(who) + " wants a 3-channel image, got " +
                      std::to_string(img.channels));
  }
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(resize_lo > 0.0) || resize_hi < resize_lo) {
    throw ConfigError("bad resize range [" + fmt_g(resize_lo) + ", " +
                      fmt_g(resize_hi) + "]");
  }
  if (crop_h < 1 || crop_w < 1) {
    throw ConfigError("bad crop " + std::to_string(crop_h) + "x" +
                      std::to_string(crop_w));
  }
  for (Scalar p : {flip_p, noise_p, blur_p, photometric_p, jpeg_p}) {
    if (p < 0.0 || p > 1.0) {
      throw ConfigError("augment probability " + fmt_g(p) +
                        " outside [0, 1]");
    }
  }
  if (jpeg_q_lo < 1 || jpeg_q_hi > 100 || jpeg_q_lo > jpeg_q_hi) {
    throw ConfigError("bad jpeg quality range [" + std::to_string(jpeg_q_lo) +
                      ", " + std::to_string(jpeg_q_hi) + "]");
  }
  if (!(noise_sigma_lo > 0.0) || noise_sigma_hi < noise_sigma_lo) {
    throw ConfigError("bad noise sigma range");
  }
  if (!(blur_sigma_lo > 0.0) || blur_sigma_hi < blur_sigma_lo) {
    throw ConfigError("bad blur sigma range");
  }
  if (brightness_delta < 0.0 || contrast_delta < 0.0 ||
      saturation_delta < 0.0 || hue_delta_deg < 0.0 || hue_delta_deg > 180.0) {
    throw ConfigError("bad photometric deltas");
  }
}

ImageU8 resize_bilinear(const ImageU8& img, Index oh, Index ow) {
  if (oh < 1 || ow < 1) {
    throw ConfigError("resize target " + std::to_string(oh) + "x" +
                      std::to_string(ow));
  }
  ImageU8 out = ImageU8::make(oh, ow, img.channels);
  std::vector<Index> ylo(static_cast<size_t>(oh)), yhi(static_cast<size_t>(oh));
  std::vector<double> yf(static_cast<size_t>(oh));
  std::vector<Index> xlo(static_cast<size_t>(ow)), xhi(static_cast<size_t>(ow));
  std::vector<double> xf(static_cast<size_t>(ow));
  auto fill = [](Index in, Index on, std::vector<Index>& lo,
                 std::vector<Index>& hi, std::vector<double>& fr) {
    for (Index d = 0; d < on; ++d) {
      double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) /
                     static_cast<double>(on) -
                 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      Index l = static_cast<Index>(std::floor(s));
      lo[static_cast<size_t>(d)] = l;
      hi[static_cast<size_t>(d)] = std::min(l + 1, in - 1);
      fr[static_cast<size_t>(d)] = s - static_cast<double>(l);
    }
  };
  fill(img.h, oh, ylo, yhi, yf);
  fill(img.w, ow, xlo, xhi, xf);
  for (Index y = 0; y < oh; ++y) {
    double fy = yf[static_cast<size_t>(y)];
    for (Index x = 0; x < ow; ++x) {
      double fx = xf[static_cast<size_t>(x)];
      for (Index c = 0; c < img.channels; ++c) {
        double v00 = img.at(ylo[static_cast<size_t>(y)],
                            xlo[static_cast<size_t>(x)], c);
        double v01 = img.at(ylo[static_cast<size_t>(y)],
                            xhi[static_cast<size_t>(x)], c);
        double v10 = img.at(yhi[static_cast<size_t>(y)],
                            xlo[static_cast<size_t>(x)], c);
        double v11 = img.at(yhi[static_cast<size_t>(y)],
                            xhi[static_cast<size_t>(x)], c);
        double top = v00 + fx * (v01 - v00);
        double bot = v10 + fx * (v11 - v10);
        out.at(y, x, c) = clamp_round_u8(top + fy * (bot - top));
      }
    }
  }
  return out;
}

ImageU8 resize_nearest(const ImageU8& img, Index oh, Index ow) {
  if (oh < 1 || ow < 1) {
    throw ConfigError("resize target " + std::to_string(oh) + "x" +
                      std::to_string(ow));
  }
  ImageU8 out = ImageU8::make(oh, ow, img.channels);
  auto src_of = [](Index d, Index in, Index on) {
    double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) /
               static_cast<double>(on);
    Index i = static_cast<Index>(std::floor(s));
    return std::clamp<Index>(i, 0, in - 1);
  };
  for (Index y = 0; y < oh; ++y) {
    Index sy = src_of(y, img.h, oh);
    for (Index x = 0; x < ow; ++x) {
      Index sx = src_of(x, img.w, ow);
      for (Index c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(sy, sx, c);
      }
    }
  }
  return out;
}

ImageU8 pad_replicate_to(const ImageU8& img, Index min_h, Index min_w) {
  Index oh = std::max(img.h, min_h);
  Index ow = std::max(img.w, min_w);
  if (oh == img.h && ow == img.w) return img;
  ImageU8 out = ImageU8::make(oh, ow, img.channels);
  for (Index y = 0; y < oh; ++y) {
    Index sy = std::min(y, img.h - 1);
    for (Index x = 0; x < ow; ++x) {
      Index sx = std::min(x, img.w - 1);
      for (Index c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(sy, sx, c);
      }
    }
  }
  return out;
}

namespace {

// symmetric reflection (edge included), total for any pad size
Index mirror_index(Index i, Index n) {
  Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

ImageU8 pad_reflect_to(const ImageU8& img, Index min_h, Index min_w) {
  Index oh = std::max(img.h, min_h);
  Index ow = std::max(img.w, min_w);
  if (oh == img.h && ow == img.w) return img;
  ImageU8 out = ImageU8::make(oh, ow, img.channels);
  for (Index y = 0; y < oh; ++y) {
    Index sy = mirror_index(y, img.h);
    for (Index x = 0; x < ow; ++x) {
      Index sx = mirror_index(x, img.w);
      for (Index c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(sy, sx, c);
      }
    }
  }
  return out;
}

ImageU8 crop_image(const ImageU8& img, Index y0, Index x0, Index ch,
                   Index cw) {
  if (y0 < 0 || x0 < 0 || ch < 1 || cw < 1 || y0 + ch > img.h ||
      x0 + cw > img.w) {
    throw ConfigError("crop [" + std::to_string(y0) + "," +
                      std::to_string(x0) + "]+" + std::to_string(ch) + "x" +
                      std::to_string(cw) + " outside " + std::to_string(img.h) +
                      "x" + std::to_string(img.w));
  }
  ImageU8 out = ImageU8::make(ch, cw, img.channels);
  for (Index y = 0; y < ch; ++y) {
    for (Index x = 0; x < cw; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
      }
    }
  }
  return out;
}

ImageU8 hflip(const ImageU8& img) {
  ImageU8 out = ImageU8::make(img.h, img.w, img.channels);
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
      }
    }
  }
  return out;
}

ImageU8 add_gaussian_noise(const ImageU8& img, Scalar sigma,
                           std::uint64_t seed) {
  require_rgb(img, "noise");
  RngStream rng(seed);
  ImageU8 out = img;
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = clamp_round_u8(static_cast<double>(img.v[i]) +
                              rng.normal(0.0, sigma));
  }
  return out;
}

ImageU8 gaussian_blur(const ImageU8& img, Scalar sigma) {
  require_rgb(img, "blur");
  if (!(sigma > 0.0)) throw ConfigError("blur sigma " + fmt_g(sigma));
  Index half = static_cast<Index>(std::ceil(2.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * half + 1));
  double sum = 0.0;
  for (Index i = -half; i <= half; ++i) {
    double wgt = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<size_t>(i + half)] = wgt;
    sum += wgt;
  }
  for (double& wgt : k) wgt /= sum;

  size_t plane = static_cast<size_t>(img.h * img.w * img.channels);
  std::vector<double> a(plane), b(plane);
  for (size_t i = 0; i < plane; ++i) a[i] = img.v[i];
  auto at = [&](std::vector<double>& buf, Index y, Index x, Index c) -> double& {
    return buf[static_cast<size_t>((y * img.w + x) * img.channels + c)];
  };
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (Index i = -half; i <= half; ++i) {
          Index sx = std::clamp<Index>(x + i, 0, img.w - 1);
          acc += k[static_cast<size_t>(i + half)] * at(a, y, sx, c);
        }
        at(b, y, x, c) = acc;
      }
    }
  }
  ImageU8 out = ImageU8::make(img.h, img.w, img.channels);
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (Index i = -half; i <= half; ++i) {
          Index sy = std::clamp<Index>(y + i, 0, img.h - 1);
          acc += k[static_cast<size_t>(i + half)] * at(b, sy, x, c);
        }
        out.at(y, x, c) = clamp_round_u8(acc);
      }
    }
  }
  return out;
}

ImageU8 photometric_jitter(const ImageU8& img, Scalar brightness,
                           Scalar contrast, Scalar saturation,
                           Scalar hue_deg) {
  require_rgb(img, "photometric jitter");
  double th = hue_deg * std::acos(-1.0) / 180.0;
  double ct = std::cos(th), st = std::sin(th);
  ImageU8 out = ImageU8::make(img.h, img.w, 3);
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      r *= brightness;
      g *= brightness;
      b *= brightness;
      r = (r - 128.0) * contrast + 128.0;
      g = (g - 128.0) * contrast + 128.0;
      b = (b - 128.0) * contrast + 128.0;
      // saturation scale and hue rotation act on the centered chroma plane
      double lum = 0.299 * r + 0.587 * g + 0.114 * b;
      double cb = -0.168736 * r - 0.331264 * g + 0.5 * b;
      double cr = 0.5 * r - 0.418688 * g - 0.081312 * b;
      double cb2 = saturation * (ct * cb - st * cr);
      double cr2 = saturation * (st * cb + ct * cr);
      out.at(y, x, 0) = clamp_round_u8(lum + 1.402 * cr2);
      out.at(y, x, 1) = clamp_round_u8(lum - 0.344136 * cb2 - 0.714136 * cr2);
      out.at(y, x, 2) = clamp_round_u8(lum + 1.772 * cb2);
    }
  }
  return out;
}

AugPlan draw_aug_plan(Index h, Index w, const AugmentConfig& cfg,
                      RngStream& rng) {
  cfg.validate();
  AugPlan p;
  p.resize_factor = rng.uniform(cfg.resize_lo, cfg.resize_hi);
  p.resized_h = std::max<Index>(
      1, static_cast<Index>(std::llround(static_cast<double>(h) *
                                         p.resize_factor)));
  p.resized_w = std::max<Index>(
      1, static_cast<Index>(std::llround(static_cast<double>(w) *
                                         p.resize_factor)));
  p.crop_h = cfg.crop_h;
  p.crop_w = cfg.crop_w;
  Index ph = std::max(p.resized_h, cfg.crop_h);
  Index pw = std::max(p.resized_w, cfg.crop_w);
  p.crop_y = rng.uniform_int(0, ph - cfg.crop_h);
  p.crop_x = rng.uniform_int(0, pw - cfg.crop_w);
  p.flip = rng.bernoulli(cfg.flip_p);
  p.noise = rng.bernoulli(cfg.noise_p);
  if (p.noise) {
    p.noise_sigma = rng.uniform(cfg.noise_sigma_lo, cfg.noise_sigma_hi);
    p.noise_seed = rng.next_u64();
  }
  p.blur = rng.bernoulli(cfg.blur_p);
  if (p.blur) {
    p.blur_sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
  }
  p.photometric = rng.bernoulli(cfg.photometric_p);
  if (p.photometric) {
    p.brightness = rng.uniform(1.0 - cfg.brightness_delta,
                               1.0 + cfg.brightness_delta);
    p.contrast = rng.uniform(1.0 - cfg.contrast_delta,
                             1.0 + cfg.contrast_delta);
    p.saturation = rng.uniform(1.0 - cfg.saturation_delta,
                               1.0 + cfg.saturation_delta);
    p.hue_deg = rng.uniform(-cfg.hue_delta_deg, cfg.hue_delta_deg);
  }
  p.jpeg = rng.bernoulli(cfg.jpeg_p);
  if (p.jpeg) {
    p.jpeg_q = static_cast<int>(rng.uniform_int(cfg.jpeg_q_lo, cfg.jpeg_q_hi));
  }
  return p;
}

ImageU8 apply_geometric(const ImageU8& img, const AugPlan& plan,
                        bool nearest) {
  ImageU8 out = nearest
                    ? resize_nearest(img, plan.resized_h, plan.resized_w)
                    : resize_bilinear(img, plan.resized_h, plan.resized_w);
  out = pad_replicate_to(out, plan.crop_h, plan.crop_w);
  out = crop_image(out, plan.crop_y, plan.crop_x, plan.crop_h, plan.crop_w);
  if (plan.flip) out = hflip(out);
  return out;
}

namespace {

std::vector<std::string> plan_log(const AugPlan& p) {
  std::vector<std::string> log;
  log.push_back("resize[" + fmt_g(p.resize_factor) + "]");
  log.push_back("crop[" + std::to_string(p.crop_x) + "," +
                std::to_string(p.crop_y) + "]");
  if (p.flip) log.push_back("flip");
  if (p.noise) log.push_back("noise[" + fmt_g(p.noise_sigma) + "]");
  if (p.blur) log.push_back("blur[" + fmt_g(p.blur_sigma) + "]");
  if (p.photometric) {
    log.push_back("photo[" + fmt_g(p.brightness) + "," + fmt_g(p.contrast) +
                  "," + fmt_g(p.saturation) + "," + fmt_g(p.hue_deg) + "]");
  }
  if (p.jpeg) log.push_back("jpeg[" + std::to_string(p.jpeg_q) + "]");
  return log;
}

}  // namespace

ForgerySample apply_aug_plan(const ForgerySample& s, const AugPlan& plan) {
  ForgerySample out;
  out.host_id = s.host_id;
  out.donor_id = s.donor_id;
  out.paste_x = s.paste_x;
  out.paste_y = s.paste_y;
  out.paste_scale = s.paste_scale;
  out.aug_log = s.aug_log;
  ImageU8 img = apply_geometric(s.image, plan, false);
  out.mask = apply_geometric(s.mask, plan, true);
  if (plan.noise) img = add_gaussian_noise(img, plan.noise_sigma,
                                           plan.noise_seed);
  if (plan.blur) img = gaussian_blur(img, plan.blur_sigma);
  if (plan.photometric) {
    img = photometric_jitter(img, plan.brightness, plan.contrast,
                             plan.saturation, plan.hue_deg);
  }
  if (plan.jpeg) img = jpeg_roundtrip(img, plan.jpeg_q);
  out.image = std::move(img);
  for (const std::string& entry : plan_log(plan)) out.aug_log.push_back(entry);
  return out;
}

ForgerySample augment(const ForgerySample& s, const AugmentConfig& cfg,
                      RngStream& rng) {
  return apply_aug_plan(s, draw_aug_plan(s.image.h, s.image.w, cfg, rng));
}

ForgerySample composite(const ImageU8& host, const ImageU8& donor,
                        const ImageU8& donor_mask, RngStream& rng) {
  require_rgb(host, "composite host");
  require_rgb(donor, "composite donor");
  if (donor_mask.channels != 1 || !donor_mask.same_dims(donor)) {
    throw ConfigError("donor mask must be 1-channel with donor dims");
  }
  bool any = false;
  for (std::uint8_t m : donor_mask.v) {
    if (m != 0) {
      any = true;
      break;
    }
  }
  if (!any) throw ConfigError("composite: donor mask is empty");

  for (int attempt = 0; attempt < 16; ++attempt) {
    Scalar scale = rng.uniform(0.5, 1.5);
    Index sh = std::max<Index>(
        1, static_cast<Index>(std::llround(donor.h * scale)));
    Index sw = std::max<Index>(
        1, static_cast<Index>(std::llround(donor.w * scale)));
    ImageU8 sdonor = resize_bilinear(donor, sh, sw);
    ImageU8 smask = resize_nearest(donor_mask, sh, sw);
    Index y0 = sh, y1 = -1, x0 = sw, x1 = -1;
    for (Index y = 0; y < sh; ++y) {
      for (Index x = 0; x < sw; ++x) {
        if (smask.at(y, x) != 0) {
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
      }
    }
    if (y1 < y0) continue;
    Index bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    if (bh > host.h || bw > host.w) continue;
    Index py = rng.uniform_int(0, host.h - bh);
    Index px = rng.uniform_int(0, host.w - bw);

    ForgerySample s;
    s.image = host;
    s.mask = ImageU8::make(host.h, host.w, 1);
    s.paste_x = px;
    s.paste_y = py;
    s.paste_scale = scale;
    for (Index y = 0; y < bh; ++y) {
      for (Index x = 0; x < bw; ++x) {
        if (smask.at(y0 + y, x0 + x) == 0) continue;
        for (Index c = 0; c < 3; ++c) {
          s.image.at(py + y, px + x, c) = sdonor.at(y0 + y, x0 + x, c);
        }
        s.mask.at(py + y, px + x) = 255;
      }
    }
    return s;
  }
  throw ConfigError("composite: pasted region never fit a " +
                    std::to_string(host.h) + "x" + std::to_string(host.w) +
                    " host in 16 attempts");
}

ImageU8 procedural_host(Index size, RngStream& rng) {
  const double pi2 = 2.0 * std::acos(-1.0);
  ImageU8 out = ImageU8::make(size, size, 3);
  for (Index c = 0; c < 3; ++c) {
    double base = rng.uniform(64.0, 192.0);
    double gx = rng.uniform(-60.0, 60.0);
    double gy = rng.uniform(-60.0, 60.0);
    // a few low-frequency waves on top of the gradient
    double amp[3], fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng.uniform(5.0, 15.0);
      fx[k] = static_cast<double>(rng.uniform_int(0, 3));
      fy[k] = static_cast<double>(rng.uniform_int(0, 3));
      ph[k] = rng.uniform(0.0, pi2);
    }
    for (Index y = 0; y < size; ++y) {
      for (Index x = 0; x < size; ++x) {
        double u = static_cast<double>(x) / static_cast<double>(size);
        double v = static_cast<double>(y) / static_cast<double>(size);
        double val = base + gx * u + gy * v;
        for (int k = 0; k < 3; ++k) {
          val += amp[k] * std::sin(pi2 * (fx[k] * u + fy[k] * v) + ph[k]);
        }
        out.at(y, x, c) = clamp_round_u8(val);
      }
    }
  }
  return out;
}

ImageU8 procedural_donor(Index size, RngStream& rng) {
  ImageU8 out = ImageU8::make(size, size, 3);
  double base[3], amp;
  for (int c = 0; c < 3; ++c) base[c] = rng.uniform(48.0, 208.0);
  amp = rng.uniform(20.0, 48.0);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      for (Index c = 0; c < 3; ++c) {
        out.at(y, x, c) = clamp_round_u8(base[c] + rng.uniform(-amp, amp));
      }
    }
  }
  return out;
}

ImageU8 procedural_mask(Index size, RngStream& rng) {
  ImageU8 out = ImageU8::make(size, size, 1);
  if (rng.bernoulli(0.5)) {
    double cy = rng.uniform(0.35, 0.65) * static_cast<double>(size);
    double cx = rng.uniform(0.35, 0.65) * static_cast<double>(size);
    double a = rng.uniform(size / 8.0, size / 3.0);
    double b = rng.uniform(size / 8.0, size / 3.0);
    for (Index y = 0; y < size; ++y) {
      for (Index x = 0; x < size; ++x) {
        double dy = (static_cast<double>(y) - cy) / b;
        double dx = (static_cast<double>(x) - cx) / a;
        if (dx * dx + dy * dy <= 1.0) out.at(y, x) = 255;
      }
    }
  } else {
    Index rh = rng.uniform_int(size / 6, size / 2);
    Index rw = rng.uniform_int(size / 6, size / 2);
    rh = std::max<Index>(rh, 1);
    rw = std::max<Index>(rw, 1);
    Index ry = rng.uniform_int(0, size - rh);
    Index rx = rng.uniform_int(0, size - rw);
    for (Index y = ry; y < ry + rh; ++y) {
      for (Index x = rx; x < rx + rw; ++x) out.at(y, x) = 255;
    }
  }
  return out;
}

std::vector<ForgerySample> procedural_corpus(Index n, Index size,
                                             const RngStream& rng) {
  if (n < 1 || size < 8) {
    throw ConfigError("corpus wants n >= 1 and size >= 8, got n=" +
                      std::to_string(n) + " size=" + std::to_string(size));
  }
  std::vector<ForgerySample> out(static_cast<size_t>(n));
  std::vector<char> failed(static_cast<size_t>(n), 0);
  parallel_for(n, [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      RngStream srng = rng.derive(static_cast<std::uint64_t>(i));
      RngStream host_rng = srng.derive("host");
      RngStream donor_rng = srng.derive("donor");
      ImageU8 host = procedural_host(size, host_rng);
      ImageU8 donor = procedural_donor(size, donor_rng);
      bool done = false;
      for (int t = 0; t < 64 && !done; ++t) {
        RngStream mask_rng = srng.derive("mask").derive(
            static_cast<std::uint64_t>(t));
        RngStream comp_rng = srng.derive("place").derive(
            static_cast<std::uint64_t>(t));
        ImageU8 mask = procedural_mask(size, mask_rng);
        ForgerySample s = composite(host, donor, mask, comp_rng);
        Scalar ratio = tampered_ratio(s.mask);
        if (ratio < 0.015 || ratio > 0.35) continue;
        char hb[32], db[32];
        std::snprintf(hb, sizeof(hb), "host_%06lld",
                      static_cast<long long>(i + 1));
        std::snprintf(db, sizeof(db), "donor_%06lld",
                      static_cast<long long>(i + 1));
        s.host_id = hb;
        s.donor_id = db;
        out[static_cast<size_t>(i)] = std::move(s);
        done = true;
      }
      if (!done) failed[static_cast<size_t>(i)] = 1;
    }
  });
  for (Index i = 0; i < n; ++i) {
    if (failed[static_cast<size_t>(i)]) {
      throw NumericError("corpus sample " + std::to_string(i + 1) +
                         ": no mask hit the ratio window in 64 tries");
    }
  }
  return out;
}

void write_dataset(const std::string& dir,
                   const std::vector<ForgerySample>& samples) {
  namespace fs = std::filesystem;
  for (const char* sub : {"images", "masks"}) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / sub, ec);
    if (ec) {
      throw IoError(dir + "/" + sub + ": cannot create directory (" +
                    ec.message() + ")");
    }
  }

  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw IoError(dir + "/manifest.txt: cannot open for writing");
  char name[16];
  for (size_t i = 0; i < samples.size(); ++i) {
    const ForgerySample& s = samples[i];
    std::snprintf(name, sizeof(name), "%06lld",
                  static_cast<long long>(i + 1));
    write_netpbm(dir + "/images/" + name + ".ppm", s.image);
    write_netpbm(dir + "/masks/" + name + ".pgm", s.mask);
    manifest << name << " host=" << (s.host_id.empty() ? "-" : s.host_id)
             << " donor=" << (s.donor_id.empty() ? "-" : s.donor_id)
             << " scale=" << fmt_g(s.paste_scale) << " pos=" << s.paste_x
             << "," << s.paste_y << " aug=";
    if (s.aug_log.empty()) {
      manifest << "-";
    } else {
      for (size_t j = 0; j < s.aug_log.size(); ++j) {
        if (j) manifest << ",";
        manifest << s.aug_log[j];
      }
    }
    manifest << "\n";
  }
  if (!manifest) throw IoError(dir + "/manifest.txt: write failed");
}

namespace {

std::vector<DatasetEntry> load_entries(const std::string& dir,
                                       const char* mask_sub) {
  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw IoError(dir + "/manifest.txt: cannot open");
  std::vector<DatasetEntry> out;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    if (name.empty()) continue;
    DatasetEntry e;
    e.name = name;
    e.image = read_netpbm(dir + "/images/" + name + ".ppm");
    std::string mask_path = dir + "/" + mask_sub + "/" + name + ".pgm";
    e.mask = read_netpbm(mask_path);
    if (e.image.channels != 3) {
      throw IoError(dir + "/images/" + name + ".ppm: expected 3 channels");
    }
    if (e.mask.channels != 1 || !e.mask.same_dims(e.image)) {
      throw IoError(mask_path + ": mask dims " + std::to_string(e.mask.h) +
                    "x" + std::to_string(e.mask.w) + " do not match image " +
                    std::to_string(e.image.h) + "x" +
                    std::to_string(e.image.w));
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw IoError(dir + ": manifest lists no samples");
  return out;
}

}  // namespace

std::vector<DatasetEntry> load_dataset(const std::string& dir) {
  return load_entries(dir, "masks");
}

std::vector<DatasetEntry> load_donor_corpus(const std::string& dir) {
  return load_entries(dir, "donor_masks");
}

std::vector<ForgerySample> donor_corpus(const std::vector<DatasetEntry>& src,
                                        Index n, Index size,
                                        const RngStream& rng) {
  if (n < 1 || size < 8) {
    throw ConfigError("corpus wants n >= 1 and size >= 8, got n=" +
                      std::to_string(n) + " size=" + std::to_string(size));
  }
  std::vector<size_t> pool;
  for (size_t i = 0; i < src.size(); ++i) {
    const ImageU8& m = src[i].mask;
    bool any = false;
    for (std::uint8_t p : m.v) {
      if (p != 0) {
        any = true;
        break;
      }
    }
    if (any) pool.push_back(i);
  }
  if (pool.empty()) {
    throw ConfigError("donor corpus has no nonempty donor masks");
  }
  std::vector<ForgerySample> out(static_cast<size_t>(n));
  std::vector<char> failed(static_cast<size_t>(n), 0);
  parallel_for(n, [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      RngStream srng = rng.derive(static_cast<std::uint64_t>(i));
      RngStream host_rng = srng.derive("host");
      size_t host_i = static_cast<size_t>(
          host_rng.uniform_int(0, static_cast<Index>(src.size()) - 1));
      ImageU8 host = resize_bilinear(src[host_i].image, size, size);
      bool done = false;
      for (int t = 0; t < 64 && !done; ++t) {
        RngStream pick_rng = srng.derive("donor").derive(
            static_cast<std::uint64_t>(t));
        size_t donor_i = pool[static_cast<size_t>(pick_rng.uniform_int(
            0, static_cast<Index>(pool.size()) - 1))];
        ImageU8 donor = src[donor_i].image;
        ImageU8 dmask = src[donor_i].mask;
        Index longest = std::max(donor.h, donor.w);
        if (longest > size) {
          Index dh = std::max<Index>(
              1, static_cast<Index>(std::llround(
                     donor.h * static_cast<Scalar>(size) / longest)));
          Index dw = std::max<Index>(
              1, static_cast<Index>(std::llround(
                     donor.w * static_cast<Scalar>(size) / longest)));
          donor = resize_bilinear(donor, dh, dw);
          dmask = resize_nearest(dmask, dh, dw);
        }
        RngStream comp_rng = srng.derive("place").derive(
            static_cast<std::uint64_t>(t));
        try {
          ForgerySample s = composite(host, donor, dmask, comp_rng);
          Scalar ratio = tampered_ratio(s.mask);
          if (ratio < 0.015 || ratio > 0.35) continue;
          s.host_id = src[host_i].name;
          s.donor_id = src[donor_i].name;
          out[static_cast<size_t>(i)] = std::move(s);
          done = true;
        } catch (const ConfigError&) {
          // a downscaled footprint can land empty or never fit; redraw
        }
      }
      if (!done) failed[static_cast<size_t>(i)] = 1;
    }
  });
  for (Index i = 0; i < n; ++i) {
    if (failed[static_cast<size_t>(i)]) {
      throw NumericError("donor sample " + std::to_string(i + 1) +
                         ": no splice hit the ratio window in 64 tries");
    }
  }
  return out;
}

Tensor image_to_tensor(const ImageU8& img) {
  return images_to_batch({&img});
}

Tensor images_to_batch(const std::vector<const ImageU8*>& imgs) {
  if (imgs.empty()) throw ConfigError("empty batch");
  const ImageU8& first = *imgs[0];
  require_rgb(first, "batch");
  for (const ImageU8* im : imgs) {
    if (!im->same_dims(first) || im->channels != 3) {
      throw DimensionError("batch images must share dims, got " +
                           std::to_string(im->h) + "x" + std::to_string(im->w) +
                           " vs " + std::to_string(first.h) + "x" +
                           std::to_string(first.w));
    }
  }
  Index b = static_cast<Index>(imgs.size());
  Tensor t = Tensor::zeros({b, 3, first.h, first.w});
  ArrayX& d = t.raw_data();
  Index hw = first.h * first.w;
  for (Index n = 0; n < b; ++n) {
    const ImageU8& im = *imgs[static_cast<size_t>(n)];
    for (Index c = 0; c < 3; ++c) {
      for (Index y = 0; y < im.h; ++y) {
        for (Index x = 0; x < im.w; ++x) {
          d[((n * 3 + c) * hw) + y * im.w + x] =
              static_cast<Scalar>(im.at(y, x, c)) / 255.0 - 0.5;
        }
      }
    }
  }
  return t;
}

ArrayX mask_to_gt01(const ImageU8& mask) {
  if (mask.channels != 1) {
    throw ConfigError("mask has " + std::to_string(mask.channels) +
                      " channels, want 1");
  }
  ArrayX gt(mask.h * mask.w);
  for (Index i = 0; i < mask.h * mask.w; ++i) {
    gt[i] = mask.v[static_cast<size_t>(i)] != 0 ? 1.0 : 0.0;
  }
  return gt;
}

Scalar tampered_ratio(const ImageU8& mask) {
  if (mask.channels != 1) {
    throw ConfigError("mask has " + std::to_string(mask.channels) +
                      " channels, want 1");
  }
  long long pos = 0;
  for (std::uint8_t m : mask.v) pos += (m != 0);
  return static_cast<Scalar>(pos) / static_cast<Scalar>(mask.pixels());
}

Scalar laplacian_energy(const ImageU8& img) {
  double acc = 0.0;
  for (Index y = 0; y < img.h; ++y) {
    Index yu = std::max<Index>(y - 1, 0), yd = std::min(y + 1, img.h - 1);
    for (Index x = 0; x < img.w; ++x) {
      Index xl = std::max<Index>(x - 1, 0), xr = std::min(x + 1, img.w - 1);
      for (Index c = 0; c < img.channels; ++c) {
        double lap = static_cast<double>(img.at(yu, x, c)) +
                     static_cast<double>(img.at(yd, x, c)) +
                     static_cast<double>(img.at(y, xl, c)) +
                     static_cast<double>(img.at(y, xr, c)) -
                     4.0 * static_cast<double>(img.at(y, x, c));
        acc += lap * lap;
      }
    }
  }
  return acc / static_cast<double>(img.pixels() * img.channels);
}

}  // namespace tamperloc
