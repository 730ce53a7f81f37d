#pragma once

#include "tamperloc/tensor.hpp"

namespace tamperloc {

struct LossConfig {
  Scalar alpha = 0.25;    // focal class weight on the tampered class
  Scalar gamma = 2.0;     // focal focusing exponent
  Scalar lambda1 = 1.0;   // weight of the focal term
  Scalar lambda2 = 1.0;   // weight of the lovasz term
  Scalar eps = 1e-7;      // probability clamp before logs

  void validate() const;
};

// Flat view of a batch of pixels under the 2-class softmax head.
// s is the signed score (tampered logit minus pristine logit) and
// p = logistic(s) is the tampered-class probability.
struct PixelBatch {
  ArrayX p;
  ArrayX s;
  ArrayX y01;   // labels in {0,1}
  ArrayX ypm;   // same labels in {-1,+1}
};

PixelBatch make_pixel_batch(ArrayX s, ArrayX y01);

struct LossResult {
  Scalar value = 0;
  ArrayX grad;   // see each function for which variable the grad is against
};

// Mean-reduced focal loss; grad is w.r.t. p (zero where the clamp is active).
LossResult focal_loss(const PixelBatch& b, const LossConfig& cfg);

// Plain binary cross-entropy, mean-reduced; grad w.r.t. p.
LossResult ce_loss(const PixelBatch& b, Scalar eps);

// Discrete gradient of the Jaccard error along the sorted chain.
// Input is the ground truth permuted by descending hinge error.
// All-zero input (no positives) returns an all-zero vector.
ArrayX lovasz_grad(const ArrayX& gt_sorted);

// Lovasz hinge on signed scores; grad w.r.t. s. Sorting is stable with
// ties broken by ascending pixel index, so the loss is deterministic.
LossResult lovasz_loss(const PixelBatch& b);

// lambda1 * focal + lambda2 * lovasz; grad w.r.t. s (focal chained through
// dp/ds = p(1-p)).
LossResult combined_loss(const PixelBatch& b, const LossConfig& cfg);

enum class LossKind { combined, ce, focal, lovasz };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_name(LossKind k);

// Bridges the pixel losses into the autodiff graph. logits is (N,2,H,W) with
// channel 1 the tampered class; gt01 is the flat (N*H*W) binary mask. The
// lovasz term is computed per image and averaged; focal/ce average over all
// pixels of each image, then over images. Returns a scalar tensor whose
// backward scatters into logits.
Tensor segmentation_loss(const Tensor& logits, const ArrayX& gt01,
                         const LossConfig& cfg, LossKind kind);

}  // namespace tamperloc
