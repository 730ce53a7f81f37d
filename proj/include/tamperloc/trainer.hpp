#pragma once

#include <string>
#include <vector>

#include "tamperloc/dataforge.hpp"
#include "tamperloc/loss.hpp"
#include "tamperloc/network.hpp"

namespace tamperloc {

struct TrainConfig {
  Scalar base_lr = 1e-4;
  Index warmup_iters = 1500;
  Index max_iters = 160000;
  Index batch_size = 4;
  Scalar poly_power = 0.9;
  Scalar warmup_start_ratio = 0.01;   // lr at t=0 as a fraction of base_lr
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 0.05;
  Scalar clip_norm = 0;               // global-norm gradient clip, 0 = off
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;         // 0 = final checkpoint only
  Index log_every = 25;

  static TrainConfig desk();
  void validate() const;
};

// Linear ramp from warmup_start_ratio*base_lr to base_lr over warmup_iters,
// then poly decay to 0 at max_iters. Continuous at the joint; t past
// max_iters clamps to 0.
Scalar lr_at(Index t, const TrainConfig& cfg);

// Decoupled weight decay: the decay term lr*wd*theta is skipped for params
// registered as decay-exempt (biases, norm scales, layer scales).
class AdamW {
 public:
  AdamW(ParamRegistry& reg, const TrainConfig& cfg);
  // Consumes the gradients currently held by the registry. Missing grads
  // count as zero. Throws NumericError on a non-finite gradient.
  void step(Scalar lr);
  Index steps_done() const { return t_; }

 private:
  ParamRegistry& reg_;
  TrainConfig cfg_;
  std::vector<ArrayX> m_, v_;
  Index t_ = 0;
};

struct SplitEval {
  Scalar loss = 0;   // per-image loss averaged over the split
  Scalar f1 = 0;     // pooled pixel confusion over the split
  Scalar iou = 0;
  Index samples = 0;
};

SplitEval evaluate_split(Network& net, const std::vector<DatasetEntry>& data,
                         const std::vector<Index>& indices, Index batch_size,
                         const LossConfig& lcfg, LossKind kind,
                         Scalar threshold);

struct TrainResult {
  Scalar first_loss = 0;   // batch loss at iteration 1
  Scalar final_loss = 0;   // batch loss at the last iteration
  SplitEval train_eval;    // full training split, measured after the loop
  SplitEval val_eval;      // validation split; samples == 0 when n < 10
  Index train_count = 0;
  Index val_count = 0;
  std::string csv;         // "iter,lr,loss,f1" header plus logged rows
};

// Runs the loop on a fixed 9:1 split of data (last n/10 samples held out,
// no model selection, held-out metrics reported only). Shuffles the
// training indices each epoch with a seeded stream. When out_dir is
// nonempty, writes loss_curve.csv, final.ckpt and optional periodic
// checkpoints there.
TrainResult train(Network& net, const std::vector<DatasetEntry>& data,
                  const TrainConfig& tcfg, const LossConfig& lcfg,
                  LossKind kind, const std::string& out_dir);

}  // namespace tamperloc
