#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tamperloc/types.hpp"

namespace tamperloc {

struct ConfusionCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;
};

// Tampered pixels (nonzero) are the positive class.
ConfusionCounts confusion(const ArrayX& pred, const ArrayX& gt);

// f1 = 2tp/(2tp+fp+fn), iou = tp/(tp+fp+fn); both 1 when tp+fp+fn = 0
// (all-negative ground truth met by an all-negative prediction).
std::pair<Scalar, Scalar> f1_iou(const ConfusionCounts& c);

// Mann-Whitney AUC with midranks for tied probabilities. Returns nothing when
// the ground truth holds a single class (AUC undefined).
std::optional<Scalar> pixel_auc(const ArrayX& probs, const ArrayX& gt);

struct ImageMetrics {
  std::string name;
  std::optional<Scalar> auc;
  Scalar f1 = 0;
  Scalar iou = 0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  Scalar threshold = 0.5;
  Scalar mean_f1 = 0;
  Scalar mean_iou = 0;
  std::optional<Scalar> mean_auc;   // over images where AUC is defined
  Index auc_excluded = 0;           // single-class images left out of the mean

  void finalize();   // fills the means from per_image
};

// Threshold rule is strictly prob > threshold.
ImageMetrics score_image(const std::string& name, const ArrayX& probs,
                         const ArrayX& gt, Scalar threshold);

std::string report_table(const MetricsReport& r);
std::string report_csv(const MetricsReport& r);   // header image,auc,f1,iou

}  // namespace tamperloc
