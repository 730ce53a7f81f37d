#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tamperloc/config.hpp"
#include "tamperloc/metrics.hpp"
#include "tamperloc/parallel.hpp"
#include "tamperloc/trainer.hpp"

namespace fs = std::filesystem;
using namespace tamperloc;

namespace {

void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw IoError(out + ": cannot create output directory: " + ec.message());
  }
}

void run_synth(const RunConfig& cfg, const std::string& out,
               const std::string& from) {
  cfg.validate();
  RngStream corpus_rng = RngStream(cfg.seed).derive("corpus");
  std::vector<ForgerySample> samples;
  if (from.empty()) {
    samples = procedural_corpus(cfg.synth_n, cfg.synth_size, corpus_rng);
  } else {
    samples = donor_corpus(load_donor_corpus(from), cfg.synth_n,
                           cfg.synth_size, corpus_rng);
  }
  AugmentConfig acfg = cfg.aug;
  acfg.master_seed = cfg.seed;
  RngStream aug_root = RngStream(acfg.master_seed).derive("aug");
  parallel_for(Index(samples.size()), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      RngStream srng = aug_root.derive(std::uint64_t(i));
      samples[i] = augment(samples[i], acfg, srng);
    }
  });
  make_out_dir(out);
  write_dataset(out, samples);
  write_resolved_config(cfg, out + "/config.txt");
  std::printf("wrote %lld samples to %s\n",
              static_cast<long long>(samples.size()), out.c_str());
}

void run_train(const RunConfig& cfg, const std::string& data,
               const std::string& out) {
  cfg.validate();
  std::vector<DatasetEntry> samples = load_dataset(data);
  Network net(cfg.net);
  net.init(cfg.seed);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  TrainResult r = train(net, samples, tcfg, cfg.loss, cfg.loss_kind, out);
  write_resolved_config(cfg, out + "/config.txt");
  std::printf("trained on %lld samples (%lld held out), %lld iterations\n",
              static_cast<long long>(r.train_count),
              static_cast<long long>(r.val_count),
              static_cast<long long>(tcfg.max_iters));
  std::printf("loss %.6g -> %.6g, train f1 %.6g iou %.6g\n", r.first_loss,
              r.final_loss, r.train_eval.f1, r.train_eval.iou);
  if (r.val_count > 0) {
    std::printf("held-out loss %.6g f1 %.6g iou %.6g\n", r.val_eval.loss,
                r.val_eval.f1, r.val_eval.iou);
  }
}

void run_eval(const RunConfig& cfg, const std::string& ckpt,
              const std::string& pred_dir, const std::string& data,
              const std::string& out) {
  cfg.validate();
  std::vector<DatasetEntry> samples = load_dataset(data);
  MetricsReport rep;
  rep.threshold = cfg.threshold;

  if (!pred_dir.empty()) {
    for (Index i = 0; i < Index(samples.size()); ++i) {
      const std::string& name = samples[i].name;
      ImageU8 pm = read_netpbm(pred_dir + "/" + name + ".pgm");
      if (pm.channels != 1 || !pm.same_dims(samples[i].mask)) {
        throw ConfigError(pred_dir + "/" + name +
                          ".pgm: prediction dims do not match the mask");
      }
      ArrayX probs(pm.pixels());
      for (Index k = 0; k < pm.pixels(); ++k) probs[k] = pm.v[k] / 255.0;
      rep.per_image.push_back(score_image(name, probs,
                                          mask_to_gt01(samples[i].mask),
                                          cfg.threshold));
    }
  } else {
    Network net = Network::load(ckpt);
    Index bs = cfg.train.batch_size;
    for (Index begin = 0; begin < Index(samples.size()); begin += bs) {
      Index end = std::min(begin + bs, Index(samples.size()));
      std::vector<const ImageU8*> imgs;
      for (Index i = begin; i < end; ++i) imgs.push_back(&samples[i].image);
      Tensor batch = images_to_batch(imgs);
      LocalizationMap map = net.forward(batch);
      Index hw = map.probs.shape().h * map.probs.shape().w;
      for (Index i = begin; i < end; ++i) {
        ArrayX probs = map.probs.data().segment((i - begin) * hw, hw);
        rep.per_image.push_back(score_image(samples[i].name, probs,
                                            mask_to_gt01(samples[i].mask),
                                            cfg.threshold));
      }
    }
  }
  rep.finalize();
  make_out_dir(out);
  std::string table = report_table(rep);
  std::fputs(table.c_str(), stdout);
  {
    std::ofstream tf(out + "/metrics.txt", std::ios::binary);
    if (!tf) throw IoError(out + "/metrics.txt: cannot open for writing");
    tf << table;
    std::ofstream cf(out + "/metrics.csv", std::ios::binary);
    if (!cf) throw IoError(out + "/metrics.csv: cannot open for writing");
    cf << report_csv(rep);
  }
  write_resolved_config(cfg, out + "/config.txt");
}

void run_infer(const RunConfig& cfg, const std::string& ckpt,
               const std::vector<std::string>& images, bool pad,
               const std::string& out) {
  cfg.validate();
  Network net = Network::load(ckpt);
  make_out_dir(out);
  for (const std::string& path : images) {
    ImageU8 img = read_netpbm(path);
    if (img.channels != 3) {
      throw ConfigError(path + ": inference needs a 3-channel P6 image");
    }
    Index h = img.h, w = img.w;
    ImageU8 fed = img;
    if (h % 32 != 0 || w % 32 != 0) {
      if (!pad) {
        throw ConfigError(path + ": dims " + std::to_string(h) + "x" +
                          std::to_string(w) +
                          " are not multiples of 32 (rerun with --pad)");
      }
      fed = pad_reflect_to(img, (h + 31) / 32 * 32, (w + 31) / 32 * 32);
    }
    LocalizationMap map = net.forward(image_to_tensor(fed));
    ImageU8 prob = probs_to_image(map.probs, 0);
    ImageU8 mask = probs_to_mask(map.probs, 0, cfg.threshold);
    if (prob.h != h || prob.w != w) {
      prob = crop_image(prob, 0, 0, h, w);
      mask = crop_image(mask, 0, 0, h, w);
    }
    std::string stem = fs::path(path).stem().string();
    write_netpbm(out + "/" + stem + ".prob.pgm", prob);
    write_netpbm(out + "/" + stem + ".mask.pgm", mask);
    std::printf("%s -> %s/%s.prob.pgm %s/%s.mask.pgm\n", path.c_str(),
                out.c_str(), stem.c_str(), out.c_str(), stem.c_str());
  }
  write_resolved_config(cfg, out + "/config.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tamperloc: desk-scale image tampering localization"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override a config key, key=value");
    sub->add_option("--seed", seed, "master seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a forgery dataset");
  std::string out_dir;
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  Index opt_n = -1, opt_size = -1;
  synth->add_option("--n", opt_n, "sample count");
  synth->add_option("--size", opt_size, "sample size in pixels");
  std::string from_dir;
  synth->add_option("--from", from_dir,
                    "splice from an external corpus (images/ + donor_masks/) "
                    "instead of procedural textures");
  add_common(synth);

  CLI::App* train_cmd = app.add_subcommand("train", "train a network");
  std::string data_dir;
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", out_dir, "run output directory")->required();
  std::string ablate_fuse, loss_name;
  train_cmd->add_option("--ablate-fuse", ablate_fuse,
                        "fused feature subset, e.g. X4,X3");
  train_cmd->add_option("--loss", loss_name,
                        "loss kind: combined|ce|focal|lovasz");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a dataset");
  std::string ckpt, pred_dir;
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file");
  eval_cmd->add_option("--pred-dir", pred_dir,
                       "read NNNNNN.pgm probability maps instead of a net");
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", out_dir, "metrics output directory")
      ->required();
  Scalar opt_threshold = -1;
  eval_cmd->add_option("--threshold", opt_threshold, "decision threshold");
  add_common(eval_cmd);

  CLI::App* infer = app.add_subcommand("infer", "localize tampering");
  std::vector<std::string> images;
  bool pad = false;
  infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
  infer->add_option("--out", out_dir, "output directory")->required();
  infer->add_option("images", images, "P6 input images")->required();
  infer->add_option("--threshold", opt_threshold, "decision threshold");
  infer->add_flag("--pad", pad, "reflect-pad dims up to a multiple of 32");
  add_common(infer);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    for (const std::string& kv : sets) apply_override(cfg, kv);
    if (seed_given) cfg.seed = seed;
    if (opt_n >= 0) cfg.synth_n = opt_n;
    if (opt_size >= 0) cfg.synth_size = opt_size;
    if (!ablate_fuse.empty()) {
      cfg.net.dec.fuse_lowest = parse_fuse_subset(ablate_fuse);
    }
    if (!loss_name.empty()) cfg.loss_kind = loss_kind_from_string(loss_name);
    if (opt_threshold >= 0) cfg.threshold = opt_threshold;

    if (synth->parsed()) {
      run_synth(cfg, out_dir, from_dir);
    } else if (train_cmd->parsed()) {
      run_train(cfg, data_dir, out_dir);
    } else if (eval_cmd->parsed()) {
      if (ckpt.empty() == pred_dir.empty()) {
        throw ConfigError("eval needs exactly one of --ckpt or --pred-dir");
      }
      run_eval(cfg, ckpt, pred_dir, data_dir, out_dir);
    } else if (infer->parsed()) {
      run_infer(cfg, ckpt, images, pad, out_dir);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
