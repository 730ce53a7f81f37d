#include "tamperloc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tamperloc/metrics.hpp"
#include "tamperloc/rng.hpp"

namespace tamperloc {

namespace fs = std::filesystem;

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.base_lr = 1e-3;
  cfg.warmup_iters = 100;
  cfg.max_iters = 2000;
  cfg.batch_size = 4;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(base_lr > 0) || !std::isfinite(base_lr)) {
    throw ConfigError("base_lr must be positive and finite");
  }
  if (warmup_iters < 0) throw ConfigError("warmup_iters must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (warmup_iters >= max_iters) {
    throw ConfigError("warmup_iters " + std::to_string(warmup_iters) +
                      " must be below max_iters " + std::to_string(max_iters));
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(poly_power > 0)) throw ConfigError("poly_power must be positive");
  if (!(warmup_start_ratio >= 0) || !(warmup_start_ratio <= 1)) {
    throw ConfigError("warmup_start_ratio must lie in [0,1]");
  }
  if (!(beta1 >= 0) || !(beta1 < 1) || !(beta2 >= 0) || !(beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(eps > 0)) throw ConfigError("adam eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

Scalar lr_at(Index t, const TrainConfig& cfg) {
  if (t >= cfg.max_iters) return 0;
  if (t < cfg.warmup_iters) {
    Scalar frac = Scalar(t) / Scalar(cfg.warmup_iters);
    return cfg.base_lr *
           (cfg.warmup_start_ratio + (1 - cfg.warmup_start_ratio) * frac);
  }
  Scalar progress =
      Scalar(t - cfg.warmup_iters) / Scalar(cfg.max_iters - cfg.warmup_iters);
  return cfg.base_lr * std::pow(1 - progress, cfg.poly_power);
}

AdamW::AdamW(ParamRegistry& reg, const TrainConfig& cfg)
    : reg_(reg), cfg_(cfg) {
  cfg_.validate();
  m_.reserve(reg_.size());
  v_.reserve(reg_.size());
  for (Index i = 0; i < reg_.size(); ++i) {
    Index n = reg_.at(i).tensor.shape().numel();
    m_.push_back(ArrayX::Zero(n));
    v_.push_back(ArrayX::Zero(n));
  }
}

void AdamW::step(Scalar lr) {
  ++t_;
  Scalar scale = 1;
  if (cfg_.clip_norm > 0) {
    Scalar sq = 0;
    for (Index i = 0; i < reg_.size(); ++i) {
      const Tensor& t = reg_.at(i).tensor;
      if (t.has_grad()) sq += t.grad().square().sum();
    }
    Scalar norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  Scalar bc1 = 1 - std::pow(cfg_.beta1, Scalar(t_));
  Scalar bc2 = 1 - std::pow(cfg_.beta2, Scalar(t_));
  for (Index i = 0; i < reg_.size(); ++i) {
    ParamInfo& p = reg_.at(i);
    Index n = p.tensor.shape().numel();
    ArrayX g;
    if (p.tensor.has_grad()) {
      if (!p.tensor.grad().isFinite().all()) {
        throw NumericError("non-finite gradient in parameter " + p.name);
      }
      g = p.tensor.grad() * scale;
    } else {
      g = ArrayX::Zero(n);
    }
    m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g.square();
    ArrayX update = (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
    if (!p.decay_exempt && cfg_.weight_decay > 0) {
      update += cfg_.weight_decay * p.tensor.data();
    }
    p.tensor.raw_data() -= lr * update;
  }
}

namespace {

struct Batch {
  Tensor images;
  ArrayX gt;
};

Batch build_batch(const std::vector<DatasetEntry>& data,
                  const std::vector<Index>& indices, Index begin, Index end) {
  std::vector<const ImageU8*> imgs;
  imgs.reserve(end - begin);
  for (Index i = begin; i < end; ++i) imgs.push_back(&data[indices[i]].image);
  Batch b;
  b.images = images_to_batch(imgs);
  Index hw = b.images.shape().h * b.images.shape().w;
  b.gt.resize((end - begin) * hw);
  for (Index i = begin; i < end; ++i) {
    b.gt.segment((i - begin) * hw, hw) = mask_to_gt01(data[indices[i]].mask);
  }
  return b;
}

void shuffle_indices(std::vector<Index>& idx, RngStream& rng) {
  for (Index i = Index(idx.size()) - 1; i > 0; --i) {
    Index j = rng.uniform_int(Index(0), i);
    std::swap(idx[i], idx[j]);
  }
}

std::string fmt_row(Index iter, Scalar lr, Scalar loss, Scalar f1) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n",
                static_cast<long long>(iter), lr, loss, f1);
  return buf;
}

}  // namespace

SplitEval evaluate_split(Network& net, const std::vector<DatasetEntry>& data,
                         const std::vector<Index>& indices, Index batch_size,
                         const LossConfig& lcfg, LossKind kind,
                         Scalar threshold) {
  SplitEval out;
  out.samples = Index(indices.size());
  if (indices.empty()) return out;
  ConfusionCounts cc;
  Scalar loss_sum = 0;
  for (Index begin = 0; begin < out.samples; begin += batch_size) {
    Index end = std::min(begin + batch_size, out.samples);
    Batch b = build_batch(data, indices, begin, end);
    LocalizationMap map = net.forward(b.images);
    Tensor loss = segmentation_loss(map.logits, b.gt, lcfg, kind);
    loss_sum += loss.data()[0] * Scalar(end - begin);
    ArrayX pred = (map.probs.data() > threshold).cast<Scalar>();
    ConfusionCounts c = confusion(pred, b.gt);
    cc.tp += c.tp;
    cc.fp += c.fp;
    cc.fn += c.fn;
    cc.tn += c.tn;
  }
  out.loss = loss_sum / Scalar(out.samples);
  auto [f1, iou] = f1_iou(cc);
  out.f1 = f1;
  out.iou = iou;
  return out;
}

TrainResult train(Network& net, const std::vector<DatasetEntry>& data,
                  const TrainConfig& tcfg, const LossConfig& lcfg,
                  LossKind kind, const std::string& out_dir) {
  tcfg.validate();
  lcfg.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");

  TrainResult res;
  res.val_count = Index(data.size()) / 10;
  res.train_count = Index(data.size()) - res.val_count;
  std::vector<Index> train_idx(res.train_count), val_idx(res.val_count);
  for (Index i = 0; i < res.train_count; ++i) train_idx[i] = i;
  for (Index i = 0; i < res.val_count; ++i) val_idx[i] = res.train_count + i;

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
      throw IoError(out_dir + ": cannot create output directory: " +
                    ec.message());
    }
  }

  AdamW opt(net.params(), tcfg);
  RngStream shuffle_root = RngStream(tcfg.seed).derive("shuffle");
  std::vector<Index> order = train_idx;
  Index pos = Index(order.size());
  Index epoch = 0;

  res.csv = "iter,lr,loss,f1\n";
  for (Index t = 1; t <= tcfg.max_iters; ++t) {
    if (pos >= Index(order.size())) {
      RngStream erng = shuffle_root.derive(std::uint64_t(epoch++));
      shuffle_indices(order, erng);
      pos = 0;
    }
    Index end = std::min(pos + tcfg.batch_size, Index(order.size()));
    Batch b = build_batch(data, order, pos, end);

    std::string which;
    for (Index i = pos; i < end; ++i) {
      which += (i == pos ? "" : ", ") + std::to_string(order[i]);
    }
    net.params().zero_grads();
    Tensor loss;
    LocalizationMap map;
    try {
      map = net.forward(b.images);
      loss = segmentation_loss(map.logits, b.gt, lcfg, kind);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(t) + ": " + e.what() +
                         " on batch samples [" + which + "]");
    }
    Scalar loss_value = loss.data()[0];
    if (!std::isfinite(loss_value)) {
      throw NumericError("iteration " + std::to_string(t) +
                         ": non-finite loss on batch samples [" + which + "]");
    }
    loss.backward();
    opt.step(lr_at(t, tcfg));

    if (t == 1) res.first_loss = loss_value;
    if (t == tcfg.max_iters) res.final_loss = loss_value;
    if (t == 1 || t == tcfg.max_iters || t % tcfg.log_every == 0) {
      ArrayX pred = (map.probs.data() > 0.5).cast<Scalar>();
      auto [f1, iou] = f1_iou(confusion(pred, b.gt));
      (void)iou;
      res.csv += fmt_row(t, lr_at(t, tcfg), loss_value, f1);
    }
    if (!out_dir.empty() && tcfg.checkpoint_every > 0 &&
        t % tcfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.ckpt",
                    static_cast<long long>(t));
      net.save(out_dir + "/" + name);
    }
    pos = end;
  }

  res.train_eval = evaluate_split(net, data, train_idx, tcfg.batch_size, lcfg,
                                  kind, 0.5);
  if (res.val_count > 0) {
    res.val_eval = evaluate_split(net, data, val_idx, tcfg.batch_size, lcfg,
                                  kind, 0.5);
  }

  if (!out_dir.empty()) {
    std::ofstream csv(out_dir + "/loss_curve.csv", std::ios::binary);
    if (!csv) throw IoError(out_dir + "/loss_curve.csv: cannot open for writing");
    csv << res.csv;
    net.save(out_dir + "/final.ckpt");
  }
  return res;
}

}  // namespace tamperloc
