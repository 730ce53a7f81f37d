#include "tamperloc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace tamperloc {

namespace {

Scalar logistic(Scalar s) {
  if (s >= 0) return 1 / (1 + std::exp(-s));
  const Scalar e = std::exp(s);
  return e / (1 + e);
}

void check_batch(const char* op, const PixelBatch& b) {
  const Index n = b.p.size();
  if (n == 0) throw DimensionError(std::string(op) + ": empty pixel batch");
  if (b.s.size() != n || b.y01.size() != n || b.ypm.size() != n) {
    throw DimensionError(std::string(op) + ": batch vectors disagree in length");
  }
  if (!b.p.allFinite() || !b.s.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("loss: alpha must lie in (0,1)");
  if (gamma < 0) throw ConfigError("loss: gamma must be >= 0");
  if (lambda1 < 0 || lambda2 < 0 || lambda1 + lambda2 <= 0) {
    throw ConfigError("loss: lambda weights must be non-negative with a positive sum");
  }
  if (!(eps > 0 && eps < 0.5)) throw ConfigError("loss: eps must lie in (0, 0.5)");
}

PixelBatch make_pixel_batch(ArrayX s, ArrayX y01) {
  PixelBatch b;
  b.p = s.unaryExpr([](Scalar v) { return logistic(v); });
  b.s = std::move(s);
  b.ypm = 2 * y01 - 1;
  b.y01 = std::move(y01);
  return b;
}

LossResult focal_loss(const PixelBatch& b, const LossConfig& cfg) {
  cfg.validate();
  check_batch("focal_loss", b);
  const Index n = b.p.size();
  const Scalar lo = cfg.eps, hi = 1 - cfg.eps;
  LossResult r;
  r.grad = ArrayX::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar p = b.p[i];
    const Scalar pc = std::min(std::max(p, lo), hi);
    const bool clamped = p <= lo || p >= hi;
    if (b.y01[i] == 1) {
      r.value += -cfg.alpha * std::pow(1 - pc, cfg.gamma) * std::log(pc);
      if (!clamped) {
        const Scalar focus =
            cfg.gamma == 0 ? 0 : cfg.gamma * std::pow(1 - pc, cfg.gamma - 1) * std::log(pc);
        r.grad[i] = cfg.alpha * focus - cfg.alpha * std::pow(1 - pc, cfg.gamma) / pc;
      }
    } else {
      r.value += -(1 - cfg.alpha) * std::pow(pc, cfg.gamma) * std::log(1 - pc);
      if (!clamped) {
        const Scalar focus =
            cfg.gamma == 0 ? 0 : cfg.gamma * std::pow(pc, cfg.gamma - 1) * std::log(1 - pc);
        r.grad[i] = -(1 - cfg.alpha) * focus + (1 - cfg.alpha) * std::pow(pc, cfg.gamma) / (1 - pc);
      }
    }
  }
  r.value /= static_cast<Scalar>(n);
  r.grad /= static_cast<Scalar>(n);
  return r;
}

LossResult ce_loss(const PixelBatch& b, Scalar eps) {
  check_batch("ce_loss", b);
  const Index n = b.p.size();
  const Scalar lo = eps, hi = 1 - eps;
  LossResult r;
  r.grad = ArrayX::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar p = b.p[i];
    const Scalar pc = std::min(std::max(p, lo), hi);
    const bool clamped = p <= lo || p >= hi;
    if (b.y01[i] == 1) {
      r.value += -std::log(pc);
      if (!clamped) r.grad[i] = -1 / pc;
    } else {
      r.value += -std::log(1 - pc);
      if (!clamped) r.grad[i] = 1 / (1 - pc);
    }
  }
  r.value /= static_cast<Scalar>(n);
  r.grad /= static_cast<Scalar>(n);
  return r;
}

ArrayX lovasz_grad(const ArrayX& gt_sorted) {
  const Index n = gt_sorted.size();
  const Scalar P = gt_sorted.sum();
  if (P == 0) return ArrayX::Zero(n);
  ArrayX g(n);
  Scalar cum = 0;
  Scalar prev_jac = 0;
  for (Index j = 0; j < n; ++j) {
    cum += gt_sorted[j];
    const Scalar inter = P - cum;
    const Scalar uni = P + (static_cast<Scalar>(j + 1) - cum);
    const Scalar jac = 1 - inter / uni;
    g[j] = jac - prev_jac;
    prev_jac = jac;
  }
  return g;
}

LossResult lovasz_loss(const PixelBatch& b) {
  check_batch("lovasz_loss", b);
  const Index n = b.s.size();
  ArrayX m = (1 - b.s * b.ypm).max(0);
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&m](Index a, Index c) { return m[a] > m[c]; });
  ArrayX gt_sorted(n);
  for (Index k = 0; k < n; ++k) gt_sorted[k] = b.y01[order[static_cast<size_t>(k)]];
  const ArrayX g = lovasz_grad(gt_sorted);
  LossResult r;
  r.grad = ArrayX::Zero(n);
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<size_t>(k)];
    r.value += m[i] * g[k];
    if (m[i] > 0) r.grad[i] = -b.ypm[i] * g[k];
  }
  return r;
}

LossResult combined_loss(const PixelBatch& b, const LossConfig& cfg) {
  cfg.validate();
  const LossResult f = focal_loss(b, cfg);
  const LossResult l = lovasz_loss(b);
  LossResult r;
  r.value = cfg.lambda1 * f.value + cfg.lambda2 * l.value;
  r.grad = cfg.lambda1 * f.grad * b.p * (1 - b.p) + cfg.lambda2 * l.grad;
  return r;
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "combined") return LossKind::combined;
  if (s == "ce") return LossKind::ce;
  if (s == "focal") return LossKind::focal;
  if (s == "lovasz") return LossKind::lovasz;
  throw ConfigError("unknown loss kind '" + s + "' (expected combined|ce|focal|lovasz)");
}

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::combined: return "combined";
    case LossKind::ce: return "ce";
    case LossKind::focal: return "focal";
    case LossKind::lovasz: return "lovasz";
  }
  return "?";
}

Tensor segmentation_loss(const Tensor& logits, const ArrayX& gt01,
                         const LossConfig& cfg, LossKind kind) {
  cfg.validate();
  if (logits.c() != 2) {
    throw DimensionError("segmentation_loss: logits must have 2 channels, got " +
                         std::to_string(logits.c()));
  }
  const Index N = logits.n(), HW = logits.h() * logits.w();
  if (gt01.size() != N * HW) {
    throw DimensionError("segmentation_loss: mask length " + std::to_string(gt01.size()) +
                         " does not match logits " + logits.shape().str());
  }
  const ArrayX& z = logits.data();
  ArrayX dlogits = ArrayX::Zero(logits.numel());
  Scalar total = 0;
  for (Index n = 0; n < N; ++n) {
    const Index base0 = (n * 2 + 0) * HW;
    const Index base1 = (n * 2 + 1) * HW;
    PixelBatch b = make_pixel_batch(z.segment(base1, HW) - z.segment(base0, HW),
                                    gt01.segment(n * HW, HW));
    LossResult r;
    switch (kind) {
      case LossKind::combined:
        r = combined_loss(b, cfg);
        break;
      case LossKind::ce: {
        r = ce_loss(b, cfg.eps);
        r.grad = r.grad * b.p * (1 - b.p);
        break;
      }
      case LossKind::focal: {
        r = focal_loss(b, cfg);
        r.grad = r.grad * b.p * (1 - b.p);
        break;
      }
      case LossKind::lovasz:
        r = lovasz_loss(b);
        break;
    }
    total += r.value;
    const ArrayX gs = r.grad / static_cast<Scalar>(N);
    dlogits.segment(base1, HW) += gs;
    dlogits.segment(base0, HW) -= gs;
  }
  total /= static_cast<Scalar>(N);
  ArrayX value(1);
  value[0] = total;
  return Tensor::make({1, 1, 1, 1}, std::move(value), {logits},
                      [dlogits = std::move(dlogits)](const Tensor& o) {
                        if (!o.parent(0).requires_grad()) return;
                        o.parent(0).accumulate_grad(ArrayX(dlogits * o.grad()[0]));
                      });
}

}  // namespace tamperloc
