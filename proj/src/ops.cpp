#include "tamperloc/ops.hpp"

#include "tamperloc/parallel.hpp"

#include <cmath>

namespace tamperloc {

namespace {

using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using ConstVectorMap = Eigen::Map<const VectorX>;
using VectorMap = Eigen::Map<VectorX>;
using StridedArrayMap = Eigen::Map<ArrayX, 0, Eigen::InnerStride<>>;
using ConstStridedArrayMap = Eigen::Map<const ArrayX, 0, Eigen::InnerStride<>>;

Index conv_out_dim(Index in, Index pad, Index k, Index stride) {
  return (in + 2 * pad - k) / stride + 1;
}

struct ConvDims {
  Index ci, oc, cig, ocg, kh, kw, oh, ow;
};

ConvDims check_conv(const char* op, const Tensor& x, const ConvParams& p) {
  const Tensor& w = p.weight;
  if (p.stride < 1 || p.padding < 0 || p.groups < 1) {
    throw ConfigError(std::string(op) + ": stride must be >= 1, padding >= 0, groups >= 1");
  }
  ConvDims d;
  d.oc = w.n();
  d.cig = w.c();
  d.kh = w.h();
  d.kw = w.w();
  d.ci = x.c();
  if (d.ci != p.groups * d.cig) {
    throw DimensionError(std::string(op) + ": input has " + std::to_string(d.ci) +
                         " channels on axis C but kernel expects " +
                         std::to_string(p.groups * d.cig));
  }
  if (d.oc % p.groups != 0) {
    throw DimensionError(std::string(op) + ": output channels " + std::to_string(d.oc) +
                         " not divisible by groups " + std::to_string(p.groups));
  }
  d.ocg = d.oc / p.groups;
  if (x.h() + 2 * p.padding < d.kh) {
    throw DimensionError(std::string(op) + ": padded size " +
                         std::to_string(x.h() + 2 * p.padding) +
                         " on axis H is smaller than kernel " + std::to_string(d.kh));
  }
  if (x.w() + 2 * p.padding < d.kw) {
    throw DimensionError(std::string(op) + ": padded size " +
                         std::to_string(x.w() + 2 * p.padding) +
                         " on axis W is smaller than kernel " + std::to_string(d.kw));
  }
  if (p.bias.numel() != d.oc) {
    throw DimensionError(std::string(op) + ": bias length " + std::to_string(p.bias.numel()) +
                         " does not match output channels " + std::to_string(d.oc));
  }
  d.oh = conv_out_dim(x.h(), p.padding, d.kh, p.stride);
  d.ow = conv_out_dim(x.w(), p.padding, d.kw, p.stride);
  return d;
}

bool pointwise_case(const ConvDims& d, const ConvParams& p) {
  return d.kh == 1 && d.kw == 1 && p.stride == 1 && p.padding == 0 && p.groups == 1;
}

void conv_forward_pointwise(const Tensor& x, const ConvParams& p, const ConvDims& d,
                            ArrayX& out) {
  const Index hw = x.h() * x.w();
  ConstRowMatrixMap wmat(p.weight.data().data(), d.oc, d.ci);
  ConstVectorMap bvec(p.bias.data().data(), d.oc);
  const Scalar* xptr = x.data().data();
  Scalar* yptr = out.data();
  parallel_for(x.n(), [&](Index b0, Index b1) {
    for (Index n = b0; n < b1; ++n) {
      ConstRowMatrixMap xm(xptr + n * d.ci * hw, d.ci, hw);
      RowMatrixMap ym(yptr + n * d.oc * hw, d.oc, hw);
      ym.noalias() = wmat * xm;
      ym.colwise() += bvec;
    }
  });
}

void conv_forward_direct(const Tensor& x, const ConvParams& p, const ConvDims& d,
                         ArrayX& out) {
  const Index H = x.h(), W = x.w();
  const Scalar* xptr = x.data().data();
  const Scalar* wptr = p.weight.data().data();
  const Scalar* bptr = p.bias.data().data();
  Scalar* yptr = out.data();
  parallel_for(x.n(), [&](Index b0, Index b1) {
    for (Index n = b0; n < b1; ++n) {
      for (Index oc = 0; oc < d.oc; ++oc) {
        const Index ci0 = (oc / d.ocg) * d.cig;
        const Scalar* wk = wptr + oc * d.cig * d.kh * d.kw;
        Scalar* yrow = yptr + (n * d.oc + oc) * d.oh * d.ow;
        for (Index oh = 0; oh < d.oh; ++oh) {
          for (Index ow = 0; ow < d.ow; ++ow) {
            Scalar acc = bptr[oc];
            // fixed (c, kh, kw) reduction order
            for (Index cig = 0; cig < d.cig; ++cig) {
              const Scalar* xpl = xptr + (n * d.ci + ci0 + cig) * H * W;
              const Scalar* wc = wk + cig * d.kh * d.kw;
              for (Index kh = 0; kh < d.kh; ++kh) {
                const Index ih = oh * p.stride - p.padding + kh;
                if (ih < 0 || ih >= H) continue;
                for (Index kw = 0; kw < d.kw; ++kw) {
                  const Index iw = ow * p.stride - p.padding + kw;
                  if (iw < 0 || iw >= W) continue;
                  acc += wc[kh * d.kw + kw] * xpl[ih * W + iw];
                }
              }
            }
            yrow[oh * d.ow + ow] = acc;
          }
        }
      }
    }
  });
}

void conv_backward(const Tensor& out, Index stride, Index padding, Index groups) {
  const Tensor& x = out.parent(0);
  const Tensor& w = out.parent(1);
  const Tensor& b = out.parent(2);
  const ArrayX& dy = out.grad();
  const Index N = x.n(), CI = x.c(), H = x.h(), W = x.w();
  const Index OC = w.n(), CIG = w.c(), KH = w.h(), KW = w.w();
  const Index OCG = OC / groups;
  const Index OH = out.h(), OW = out.w();
  const Scalar* dyptr = dy.data();
  const Scalar* xptr = x.data().data();
  const Scalar* wptr = w.data().data();

  const bool pointwise = KH == 1 && KW == 1 && stride == 1 && padding == 0 && groups == 1;
  const Index hw = H * W;

  if (x.requires_grad()) {
    ArrayX dx(x.numel());
    if (pointwise) {
      ConstRowMatrixMap wmat(wptr, OC, CI);
      parallel_for(N, [&](Index b0, Index b1) {
        for (Index n = b0; n < b1; ++n) {
          ConstRowMatrixMap dym(dyptr + n * OC * hw, OC, hw);
          RowMatrixMap dxm(dx.data() + n * CI * hw, CI, hw);
          dxm.noalias() = wmat.transpose() * dym;
        }
      });
    } else {
      parallel_for(N, [&](Index b0, Index b1) {
        for (Index n = b0; n < b1; ++n) {
          for (Index ci = 0; ci < CI; ++ci) {
            const Index g = ci / CIG;
            const Index cig = ci % CIG;
            Scalar* dxpl = dx.data() + (n * CI + ci) * H * W;
            for (Index ih = 0; ih < H; ++ih) {
              for (Index iw = 0; iw < W; ++iw) {
                Scalar acc = 0;
                for (Index ocg = 0; ocg < OCG; ++ocg) {
                  const Index oc = g * OCG + ocg;
                  const Scalar* wc = wptr + (oc * CIG + cig) * KH * KW;
                  const Scalar* dypl = dyptr + (n * OC + oc) * OH * OW;
                  for (Index kh = 0; kh < KH; ++kh) {
                    const Index t = ih + padding - kh;
                    if (t < 0 || t % stride != 0) continue;
                    const Index oh = t / stride;
                    if (oh >= OH) continue;
                    for (Index kw = 0; kw < KW; ++kw) {
                      const Index u = iw + padding - kw;
                      if (u < 0 || u % stride != 0) continue;
                      const Index ow = u / stride;
                      if (ow >= OW) continue;
                      acc += wc[kh * KW + kw] * dypl[oh * OW + ow];
                    }
                  }
                }
                dxpl[ih * W + iw] = acc;
              }
            }
          }
        }
      });
    }
    out.parent(0).accumulate_grad(dx);
  }

  if (w.requires_grad()) {
    ArrayX dw(w.numel());
    if (pointwise) {
      RowMatrixMap dwm(dw.data(), OC, CI);
      dwm.setZero();
      for (Index n = 0; n < N; ++n) {
        ConstRowMatrixMap dym(dyptr + n * OC * hw, OC, hw);
        ConstRowMatrixMap xm(xptr + n * CI * hw, CI, hw);
        dwm.noalias() += dym * xm.transpose();
      }
    } else {
      const Index wn = w.numel();
      parallel_for(wn, [&](Index b0, Index b1) {
        for (Index widx = b0; widx < b1; ++widx) {
          const Index kw = widx % KW;
          const Index kh = (widx / KW) % KH;
          const Index cig = (widx / (KW * KH)) % CIG;
          const Index oc = widx / (KW * KH * CIG);
          const Index ci = (oc / OCG) * CIG + cig;
          Scalar acc = 0;
          for (Index n = 0; n < N; ++n) {
            const Scalar* xpl = xptr + (n * CI + ci) * H * W;
            const Scalar* dypl = dyptr + (n * OC + oc) * OH * OW;
            for (Index oh = 0; oh < OH; ++oh) {
              const Index ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              for (Index ow = 0; ow < OW; ++ow) {
                const Index iw = ow * stride - padding + kw;
                if (iw < 0 || iw >= W) continue;
                acc += xpl[ih * W + iw] * dypl[oh * OW + ow];
              }
            }
          }
          dw[widx] = acc;
        }
      });
    }
    out.parent(1).accumulate_grad(dw);
  }

  if (b.requires_grad()) {
    ArrayX db = ArrayX::Zero(OC);
    for (Index oc = 0; oc < OC; ++oc) {
      Scalar acc = 0;
      for (Index n = 0; n < N; ++n) {
        const Scalar* dypl = dyptr + (n * OC + oc) * OH * OW;
        for (Index i = 0; i < OH * OW; ++i) acc += dypl[i];
      }
      db[oc] = acc;
    }
    out.parent(2).accumulate_grad(db);
  }
}

struct ResizeAxis {
  std::vector<Index> lo, hi;
  std::vector<Scalar> frac;
};

ResizeAxis resize_axis(Index in, Index out) {
  ResizeAxis a;
  a.lo.resize(static_cast<size_t>(out));
  a.hi.resize(static_cast<size_t>(out));
  a.frac.resize(static_cast<size_t>(out));
  const Scalar scale = static_cast<Scalar>(in) / static_cast<Scalar>(out);
  for (Index d = 0; d < out; ++d) {
    Scalar s = (static_cast<Scalar>(d) + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > static_cast<Scalar>(in - 1)) s = static_cast<Scalar>(in - 1);
    Index lo = static_cast<Index>(std::floor(s));
    if (lo > in - 1) lo = in - 1;
    a.lo[static_cast<size_t>(d)] = lo;
    a.hi[static_cast<size_t>(d)] = std::min(lo + 1, in - 1);
    a.frac[static_cast<size_t>(d)] = s - static_cast<Scalar>(lo);
  }
  return a;
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  const ConvDims d = check_conv("conv2d", x, p);
  const Shape4 out_shape{x.n(), d.oc, d.oh, d.ow};
  ArrayX out(out_shape.numel());
  if (pointwise_case(d, p)) {
    conv_forward_pointwise(x, p, d, out);
  } else {
    conv_forward_direct(x, p, d, out);
  }
  const Index stride = p.stride, padding = p.padding, groups = p.groups;
  return Tensor::make(out_shape, std::move(out), {x, p.weight, p.bias},
                      [stride, padding, groups](const Tensor& o) {
                        conv_backward(o, stride, padding, groups);
                      });
}

Tensor depthwise_conv2d(const Tensor& x, const ConvParams& p) {
  if (p.groups != x.c() || p.weight.n() != x.c() || p.weight.c() != 1) {
    throw ConfigError("depthwise_conv2d: requires groups == C_in == C_out (got groups=" +
                      std::to_string(p.groups) + ", C_in=" + std::to_string(x.c()) +
                      ", C_out=" + std::to_string(p.weight.n()) + ")");
  }
  return conv2d(x, p);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const Index C = x.c();
  if (gamma.numel() != C || beta.numel() != C) {
    throw DimensionError("layer_norm: gamma/beta length (" + std::to_string(gamma.numel()) +
                         "," + std::to_string(beta.numel()) + ") must equal channels " +
                         std::to_string(C));
  }
  const Index N = x.n(), HW = x.h() * x.w();
  ArrayX out(x.numel());
  const Scalar* xptr = x.data().data();
  const Scalar* gptr = gamma.data().data();
  const Scalar* bptr = beta.data().data();
  ConstVectorMap gvec(gptr, C), bvec(bptr, C);
  parallel_for(N, [&](Index b0, Index b1) {
    ArrayX xc(C);
    for (Index n = b0; n < b1; ++n) {
      for (Index pos = 0; pos < HW; ++pos) {
        ConstStridedArrayMap xv(xptr + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        StridedArrayMap yv(out.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        const Scalar mu = xv.mean();
        xc = xv - mu;
        const Scalar var = xc.square().mean();
        const Scalar inv = Scalar(1) / std::sqrt(var + eps);
        yv = gvec.array() * (xc * inv) + bvec.array();
      }
    }
  });
  return Tensor::make(x.shape(), std::move(out), {x, gamma, beta}, [eps](const Tensor& o) {
    const Tensor& x = o.parent(0);
    const Tensor& gamma = o.parent(1);
    const Index C = x.c(), N = x.n(), HW = x.h() * x.w();
    const ArrayX& dy = o.grad();
    const Scalar* xptr = x.data().data();
    ConstVectorMap gvec(gamma.data().data(), C);
    ArrayX dx = ArrayX::Zero(x.numel());
    ArrayX dgamma = ArrayX::Zero(C);
    ArrayX dbeta = ArrayX::Zero(C);
    ArrayX xhat(C), g(C), dyv(C);
    for (Index n = 0; n < N; ++n) {
      for (Index pos = 0; pos < HW; ++pos) {
        ConstStridedArrayMap xv(xptr + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        ConstStridedArrayMap dym(dy.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        StridedArrayMap dxv(dx.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        const Scalar mu = xv.mean();
        xhat = xv - mu;
        const Scalar var = xhat.square().mean();
        const Scalar inv = Scalar(1) / std::sqrt(var + eps);
        xhat *= inv;
        dyv = dym;
        g = gvec.array() * dyv;
        const Scalar gm = g.mean();
        const Scalar gxm = (g * xhat).mean();
        dxv = inv * (g - gm - xhat * gxm);
        dgamma += dyv * xhat;
        dbeta += dyv;
      }
    }
    if (o.parent(0).requires_grad()) o.parent(0).accumulate_grad(dx);
    if (o.parent(1).requires_grad()) o.parent(1).accumulate_grad(dgamma);
    if (o.parent(2).requires_grad()) o.parent(2).accumulate_grad(dbeta);
  });
}

Tensor gelu(const Tensor& x) {
  static const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  ArrayX out = x.data().unaryExpr([](Scalar v) {
    return v * Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2));
  });
  return Tensor::make(x.shape(), std::move(out), {x}, [](const Tensor& o) {
    const Tensor& x = o.parent(0);
    static const Scalar inv_sqrt2pi = Scalar(1) / std::sqrt(2 * M_PI);
    ArrayX dx = x.data().unaryExpr([](Scalar v) {
      const Scalar phi_cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2));
      const Scalar phi_pdf = inv_sqrt2pi * std::exp(Scalar(-0.5) * v * v);
      return phi_cdf + v * phi_pdf;
    });
    dx *= o.grad();
    o.parent(0).accumulate_grad(dx);
  });
}

Tensor bilinear_resize(const Tensor& x, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("bilinear_resize: output size must be >= 1");
  }
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const ResizeAxis ay = resize_axis(H, out_h);
  const ResizeAxis ax = resize_axis(W, out_w);
  ArrayX out(N * C * out_h * out_w);
  const Scalar* xptr = x.data().data();
  parallel_for(N * C, [&](Index b0, Index b1) {
    for (Index pl = b0; pl < b1; ++pl) {
      const Scalar* src = xptr + pl * H * W;
      Scalar* dst = out.data() + pl * out_h * out_w;
      for (Index oy = 0; oy < out_h; ++oy) {
        const Index y0 = ay.lo[oy], y1 = ay.hi[oy];
        const Scalar fy = ay.frac[oy];
        for (Index ox = 0; ox < out_w; ++ox) {
          const Index x0 = ax.lo[ox], x1 = ax.hi[ox];
          const Scalar fx = ax.frac[ox];
          const Scalar top = (1 - fx) * src[y0 * W + x0] + fx * src[y0 * W + x1];
          const Scalar bot = (1 - fx) * src[y1 * W + x0] + fx * src[y1 * W + x1];
          dst[oy * out_w + ox] = (1 - fy) * top + fy * bot;
        }
      }
    }
  });
  return Tensor::make({N, C, out_h, out_w}, std::move(out), {x},
                      [ay, ax](const Tensor& o) {
                        const Tensor& x = o.parent(0);
                        if (!x.requires_grad()) return;
                        const Index H = x.h(), W = x.w();
                        const Index OH = o.h(), OW = o.w();
                        const ArrayX& dy = o.grad();
                        ArrayX dx = ArrayX::Zero(x.numel());
                        // transposed scatter of the interpolation weights
                        for (Index pl = 0; pl < x.n() * x.c(); ++pl) {
                          const Scalar* dyp = dy.data() + pl * OH * OW;
                          Scalar* dxp = dx.data() + pl * H * W;
                          for (Index oy = 0; oy < OH; ++oy) {
                            const Index y0 = ay.lo[oy], y1 = ay.hi[oy];
                            const Scalar fy = ay.frac[oy];
                            for (Index ox = 0; ox < OW; ++ox) {
                              const Index x0 = ax.lo[ox], x1 = ax.hi[ox];
                              const Scalar fx = ax.frac[ox];
                              const Scalar g = dyp[oy * OW + ox];
                              dxp[y0 * W + x0] += (1 - fy) * (1 - fx) * g;
                              dxp[y0 * W + x1] += (1 - fy) * fx * g;
                              dxp[y1 * W + x0] += fy * (1 - fx) * g;
                              dxp[y1 * W + x1] += fy * fx * g;
                            }
                          }
                        }
                        o.parent(0).accumulate_grad(dx);
                      });
}

Tensor adaptive_avg_pool(const Tensor& x, Index bins) {
  const Index H = x.h(), W = x.w();
  if (bins < 1 || bins > H || bins > W) {
    throw ConfigError("adaptive_avg_pool: bins " + std::to_string(bins) +
                      " exceeds spatial size " + std::to_string(H) + "x" + std::to_string(W));
  }
  const Index N = x.n(), C = x.c();
  ArrayX out(N * C * bins * bins);
  const Scalar* xptr = x.data().data();
  auto cell_lo = [bins](Index i, Index s) { return (i * s) / bins; };
  auto cell_hi = [bins](Index i, Index s) { return ((i + 1) * s + bins - 1) / bins; };
  for (Index pl = 0; pl < N * C; ++pl) {
    const Scalar* src = xptr + pl * H * W;
    Scalar* dst = out.data() + pl * bins * bins;
    for (Index i = 0; i < bins; ++i) {
      const Index r0 = cell_lo(i, H), r1 = cell_hi(i, H);
      for (Index j = 0; j < bins; ++j) {
        const Index c0 = cell_lo(j, W), c1 = cell_hi(j, W);
        Scalar acc = 0;
        for (Index r = r0; r < r1; ++r)
          for (Index c = c0; c < c1; ++c) acc += src[r * W + c];
        dst[i * bins + j] = acc / static_cast<Scalar>((r1 - r0) * (c1 - c0));
      }
    }
  }
  return Tensor::make({N, C, bins, bins}, std::move(out), {x}, [bins](const Tensor& o) {
    const Tensor& x = o.parent(0);
    if (!x.requires_grad()) return;
    const Index H = x.h(), W = x.w();
    const ArrayX& dy = o.grad();
    ArrayX dx = ArrayX::Zero(x.numel());
    auto cell_lo = [bins](Index i, Index s) { return (i * s) / bins; };
    auto cell_hi = [bins](Index i, Index s) { return ((i + 1) * s + bins - 1) / bins; };
    for (Index pl = 0; pl < x.n() * x.c(); ++pl) {
      const Scalar* dyp = dy.data() + pl * bins * bins;
      Scalar* dxp = dx.data() + pl * H * W;
      for (Index i = 0; i < bins; ++i) {
        const Index r0 = cell_lo(i, H), r1 = cell_hi(i, H);
        for (Index j = 0; j < bins; ++j) {
          const Index c0 = cell_lo(j, W), c1 = cell_hi(j, W);
          const Scalar g = dyp[i * bins + j] / static_cast<Scalar>((r1 - r0) * (c1 - c0));
          for (Index r = r0; r < r1; ++r)
            for (Index c = c0; c < c1; ++c) dxp[r * W + c] += g;
        }
      }
    }
    o.parent(0).accumulate_grad(dx);
  });
}

Tensor softmax_channels(const Tensor& x) {
  const Index C = x.c();
  if (C < 2) {
    throw DimensionError("softmax_channels: needs C >= 2 on axis C, got " + std::to_string(C));
  }
  const Index N = x.n(), HW = x.h() * x.w();
  ArrayX out(x.numel());
  const Scalar* xptr = x.data().data();
  ArrayX e(C);
  for (Index n = 0; n < N; ++n) {
    for (Index pos = 0; pos < HW; ++pos) {
      ConstStridedArrayMap xv(xptr + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
      StridedArrayMap yv(out.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
      const Scalar m = xv.maxCoeff();
      e = (xv - m).exp();
      yv = e / e.sum();
    }
  }
  return Tensor::make(x.shape(), std::move(out), {x}, [](const Tensor& o) {
    const Tensor& x = o.parent(0);
    if (!x.requires_grad()) return;
    const Index C = x.c(), N = x.n(), HW = x.h() * x.w();
    const ArrayX& dy = o.grad();
    const ArrayX& y = o.data();
    ArrayX dx(x.numel());
    ArrayX yv(C), dv(C);
    for (Index n = 0; n < N; ++n) {
      for (Index pos = 0; pos < HW; ++pos) {
        ConstStridedArrayMap ym(y.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        ConstStridedArrayMap dym(dy.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        StridedArrayMap dxv(dx.data() + n * C * HW + pos, C, Eigen::InnerStride<>(HW));
        yv = ym;
        dv = dym;
        const Scalar dot = (yv * dv).sum();
        dxv = yv * (dv - dot);
      }
    }
    o.parent(0).accumulate_grad(dx);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  ArrayX out = a.data() + b.data();
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](const Tensor& o) {
    if (o.parent(0).requires_grad()) o.parent(0).accumulate_grad(o.grad());
    if (o.parent(1).requires_grad()) o.parent(1).accumulate_grad(o.grad());
  });
}

Tensor channel_scale(const Tensor& x, const Tensor& s) {
  const Index C = x.c();
  if (s.numel() != C) {
    throw DimensionError("channel_scale: scale length " + std::to_string(s.numel()) +
                         " must equal channels " + std::to_string(C));
  }
  const Index N = x.n(), HW = x.h() * x.w();
  ArrayX out(x.numel());
  const Scalar* sptr = s.data().data();
  for (Index n = 0; n < N; ++n) {
    for (Index c = 0; c < C; ++c) {
      const Index base = (n * C + c) * HW;
      out.segment(base, HW) = x.data().segment(base, HW) * sptr[c];
    }
  }
  return Tensor::make(x.shape(), std::move(out), {x, s}, [](const Tensor& o) {
    const Tensor& x = o.parent(0);
    const Tensor& s = o.parent(1);
    const Index C = x.c(), N = x.n(), HW = x.h() * x.w();
    const ArrayX& dy = o.grad();
    if (x.requires_grad()) {
      ArrayX dx(x.numel());
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
          const Index base = (n * C + c) * HW;
          dx.segment(base, HW) = dy.segment(base, HW) * s.data()[c];
        }
      o.parent(0).accumulate_grad(dx);
    }
    if (s.requires_grad()) {
      ArrayX ds = ArrayX::Zero(C);
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
          const Index base = (n * C + c) * HW;
          ds[c] += (dy.segment(base, HW) * x.data().segment(base, HW)).sum();
        }
      o.parent(1).accumulate_grad(ds);
    }
  });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) {
    throw ConfigError("concat_channels: empty input list");
  }
  const Index N = xs[0].n(), H = xs[0].h(), W = xs[0].w();
  Index C = 0;
  for (const Tensor& t : xs) {
    if (t.n() != N || t.h() != H || t.w() != W) {
      throw DimensionError("concat_channels: shape mismatch " + t.shape().str() + " vs " +
                           xs[0].shape().str());
    }
    C += t.c();
  }
  ArrayX out(N * C * H * W);
  const Index HW = H * W;
  for (Index n = 0; n < N; ++n) {
    Index coff = 0;
    for (const Tensor& t : xs) {
      const Index tc = t.c();
      out.segment((n * C + coff) * HW, tc * HW) = t.data().segment(n * tc * HW, tc * HW);
      coff += tc;
    }
  }
  return Tensor::make({N, C, H, W}, std::move(out), xs, [](const Tensor& o) {
    const Index N = o.n(), C = o.c(), HW = o.h() * o.w();
    const ArrayX& dy = o.grad();
    Index coff = 0;
    for (Index k = 0; k < o.parent_count(); ++k) {
      const Tensor& t = o.parent(k);
      const Index tc = t.c();
      if (t.requires_grad()) {
        ArrayX dt(t.numel());
        for (Index n = 0; n < N; ++n) {
          dt.segment(n * tc * HW, tc * HW) = dy.segment((n * C + coff) * HW, tc * HW);
        }
        o.parent(k).accumulate_grad(dt);
      }
      coff += tc;
    }
  });
}

}  // namespace tamperloc
