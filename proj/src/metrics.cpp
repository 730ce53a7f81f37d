#include "tamperloc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace tamperloc {

namespace {

std::string fmt(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<Scalar>& v) {
  return v ? fmt(*v) : "nan";
}

}  // namespace

ConfusionCounts confusion(const ArrayX& pred, const ArrayX& gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("confusion: prediction has " + std::to_string(pred.size()) +
                         " pixels but ground truth has " + std::to_string(gt.size()));
  }
  ConfusionCounts c;
  for (Index i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::pair<Scalar, Scalar> f1_iou(const ConfusionCounts& c) {
  const long long denom_f1 = 2 * c.tp + c.fp + c.fn;
  const long long denom_iou = c.tp + c.fp + c.fn;
  if (denom_iou == 0) return {1.0, 1.0};
  const Scalar f1 = denom_f1 == 0 ? 0 : 2.0 * c.tp / static_cast<Scalar>(denom_f1);
  const Scalar iou = static_cast<Scalar>(c.tp) / static_cast<Scalar>(denom_iou);
  return {f1, iou};
}

std::optional<Scalar> pixel_auc(const ArrayX& probs, const ArrayX& gt) {
  if (probs.size() != gt.size()) {
    throw DimensionError("pixel_auc: probability map has " + std::to_string(probs.size()) +
                         " pixels but ground truth has " + std::to_string(gt.size()));
  }
  const Index n = probs.size();
  Index pos = 0;
  for (Index i = 0; i < n; ++i) pos += gt[i] != 0 ? 1 : 0;
  const Index neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&probs](Index a, Index b) { return probs[a] < probs[b]; });

  // midranks over tie groups, then sum ranks of positives
  Scalar rank_pos = 0;
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j < n && probs[order[static_cast<size_t>(j)]] ==
                        probs[order[static_cast<size_t>(i)]])
      ++j;
    const Scalar midrank = (static_cast<Scalar>(i + 1) + static_cast<Scalar>(j)) / 2;
    for (Index k = i; k < j; ++k)
      if (gt[order[static_cast<size_t>(k)]] != 0) rank_pos += midrank;
    i = j;
  }
  const Scalar p = static_cast<Scalar>(pos);
  return (rank_pos - p * (p + 1) / 2) / (p * static_cast<Scalar>(neg));
}

ImageMetrics score_image(const std::string& name, const ArrayX& probs,
                         const ArrayX& gt, Scalar threshold) {
  ImageMetrics m;
  m.name = name;
  ArrayX pred = (probs > threshold).cast<Scalar>();
  const ConfusionCounts c = confusion(pred, gt);
  std::tie(m.f1, m.iou) = f1_iou(c);
  m.auc = pixel_auc(probs, gt);
  return m;
}

void MetricsReport::finalize() {
  mean_f1 = 0;
  mean_iou = 0;
  Scalar auc_sum = 0;
  Index auc_n = 0;
  for (const ImageMetrics& m : per_image) {
    mean_f1 += m.f1;
    mean_iou += m.iou;
    if (m.auc) {
      auc_sum += *m.auc;
      ++auc_n;
    }
  }
  const Scalar n = static_cast<Scalar>(per_image.size());
  if (!per_image.empty()) {
    mean_f1 /= n;
    mean_iou /= n;
  }
  auc_excluded = static_cast<Index>(per_image.size()) - auc_n;
  mean_auc = auc_n > 0 ? std::optional<Scalar>(auc_sum / static_cast<Scalar>(auc_n))
                       : std::nullopt;
}

std::string report_table(const MetricsReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", "image", "auc", "f1", "iou");
  out += line;
  for (const ImageMetrics& m : r.per_image) {
    std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", m.name.c_str(),
                  fmt_opt(m.auc).c_str(), fmt(m.f1).c_str(), fmt(m.iou).c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", "mean",
                fmt_opt(r.mean_auc).c_str(), fmt(r.mean_f1).c_str(), fmt(r.mean_iou).c_str());
  out += line;
  if (r.auc_excluded > 0) {
    out += "warning: " + std::to_string(r.auc_excluded) +
           " single-class image(s) excluded from the AUC mean\n";
  }
  return out;
}

std::string report_csv(const MetricsReport& r) {
  std::string out = "image,auc,f1,iou\n";
  for (const ImageMetrics& m : r.per_image) {
    out += m.name + "," + fmt_opt(m.auc) + "," + fmt(m.f1) + "," + fmt(m.iou) + "\n";
  }
  return out;
}

}  // namespace tamperloc
