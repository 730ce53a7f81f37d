#pragma once

#include <string>
#include <vector>

#include "tamperloc/dataforge.hpp"
#include "tamperloc/loss.hpp"
#include "tamperloc/network.hpp"
#include "tamperloc/trainer.hpp"

namespace tamperloc {

// Every tunable of the pipeline behind a flat `key = value` file. Defaults
// are the desk preset; `desk_preset = false` switches the network and
// trainer to their full-scale defaults before other keys apply (the key is
// honored first regardless of its position in the file).
struct RunConfig {
  bool desk_preset = true;
  NetConfig net = NetConfig::desk();
  LossConfig loss;
  LossKind loss_kind = LossKind::combined;
  AugmentConfig aug;
  TrainConfig train = TrainConfig::desk();
  std::uint64_t seed = 0;
  Scalar threshold = 0.5;
  Index synth_n = 16;
  Index synth_size = 64;

  void validate() const;
};

// "X4" .. "X4,X3,X2,X1" (case-insensitive). The run must be a contiguous
// prefix of the deep-to-shallow chain, so it maps to dec.fuse_lowest.
Index parse_fuse_subset(const std::string& s);
std::string fuse_subset_name(Index fuse_lowest);

std::vector<std::string> config_keys();

// `key = value` lines; '#' starts a comment, blank lines skipped. Unknown
// or duplicate keys are hard errors.
void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin);
RunConfig load_config_file(const std::string& path);

// A single "key=value" override (the --set flag).
void apply_override(RunConfig& cfg, const std::string& kv);

// Full dump, one line per key, doubles at %.17g. Feeding it back
// reproduces the config exactly.
std::string resolved_config_text(const RunConfig& cfg);
void write_resolved_config(const RunConfig& cfg, const std::string& path);

}  // namespace tamperloc
