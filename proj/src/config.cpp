#include "tamperloc/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace tamperloc {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fmt_f(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_i(long long v) { return std::to_string(v); }

long long parse_i(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  long long out = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

std::uint64_t parse_u(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0' || v[0] == '-') {
    throw ConfigError("key '" + key + "': '" + v +
                      "' is not a non-negative integer");
  }
  return out;
}

Scalar parse_f(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

bool parse_b(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not true or false");
}

std::vector<Index> parse_ints(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    out.push_back(parse_i(key, trim(item)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string join_ints(const std::vector<Index>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    out += (i ? "," : "") + std::to_string(xs[i]);
  }
  return out;
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"desk_preset", [](const RunConfig& c) { return c.desk_preset ? std::string("true") : std::string("false"); },
       [](RunConfig& c, const std::string& v) {
         c.desk_preset = parse_b("desk_preset", v);
         c.net = c.desk_preset ? NetConfig::desk() : NetConfig();
         c.train = c.desk_preset ? TrainConfig::desk() : TrainConfig();
       }},
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = parse_u("seed", v); }},
      {"threshold", [](const RunConfig& c) { return fmt_f(c.threshold); },
       [](RunConfig& c, const std::string& v) { c.threshold = parse_f("threshold", v); }},
      {"synth_n", [](const RunConfig& c) { return fmt_i(c.synth_n); },
       [](RunConfig& c, const std::string& v) { c.synth_n = parse_i("synth_n", v); }},
      {"synth_size", [](const RunConfig& c) { return fmt_i(c.synth_size); },
       [](RunConfig& c, const std::string& v) { c.synth_size = parse_i("synth_size", v); }},

      {"enc_c", [](const RunConfig& c) { return fmt_i(c.net.enc.C); },
       [](RunConfig& c, const std::string& v) { c.net.enc.C = parse_i("enc_c", v); }},
      {"enc_blocks", [](const RunConfig& c) {
         return join_ints({c.net.enc.blocks.begin(), c.net.enc.blocks.end()});
       },
       [](RunConfig& c, const std::string& v) {
         std::vector<Index> xs = parse_ints("enc_blocks", v);
         if (xs.size() != 4) {
           throw ConfigError("key 'enc_blocks': want 4 comma-separated ints");
         }
         for (size_t i = 0; i < 4; ++i) c.net.enc.blocks[i] = xs[i];
       }},
      {"enc_layer_scale", [](const RunConfig& c) { return fmt_f(c.net.enc.layer_scale_init); },
       [](RunConfig& c, const std::string& v) { c.net.enc.layer_scale_init = parse_f("enc_layer_scale", v); }},
      {"enc_kind", [](const RunConfig& c) { return c.net.enc.block_kind; },
       [](RunConfig& c, const std::string& v) { c.net.enc.block_kind = v; }},

      {"dec_fpn", [](const RunConfig& c) { return fmt_i(c.net.dec.fpn_channels); },
       [](RunConfig& c, const std::string& v) { c.net.dec.fpn_channels = parse_i("dec_fpn", v); }},
      {"dec_bins", [](const RunConfig& c) { return join_ints(c.net.dec.ppm_bins); },
       [](RunConfig& c, const std::string& v) { c.net.dec.ppm_bins = parse_ints("dec_bins", v); }},
      {"fuse_subset", [](const RunConfig& c) { return fuse_subset_name(c.net.dec.fuse_lowest); },
       [](RunConfig& c, const std::string& v) { c.net.dec.fuse_lowest = parse_fuse_subset(v); }},

      {"loss_kind", [](const RunConfig& c) { return loss_kind_name(c.loss_kind); },
       [](RunConfig& c, const std::string& v) { c.loss_kind = loss_kind_from_string(v); }},
      {"focal_alpha", [](const RunConfig& c) { return fmt_f(c.loss.alpha); },
       [](RunConfig& c, const std::string& v) { c.loss.alpha = parse_f("focal_alpha", v); }},
      {"focal_gamma", [](const RunConfig& c) { return fmt_f(c.loss.gamma); },
       [](RunConfig& c, const std::string& v) { c.loss.gamma = parse_f("focal_gamma", v); }},
      {"lambda1", [](const RunConfig& c) { return fmt_f(c.loss.lambda1); },
       [](RunConfig& c, const std::string& v) { c.loss.lambda1 = parse_f("lambda1", v); }},
      {"lambda2", [](const RunConfig& c) { return fmt_f(c.loss.lambda2); },
       [](RunConfig& c, const std::string& v) { c.loss.lambda2 = parse_f("lambda2", v); }},
      {"loss_eps", [](const RunConfig& c) { return fmt_f(c.loss.eps); },
       [](RunConfig& c, const std::string& v) { c.loss.eps = parse_f("loss_eps", v); }},

      {"base_lr", [](const RunConfig& c) { return fmt_f(c.train.base_lr); },
       [](RunConfig& c, const std::string& v) { c.train.base_lr = parse_f("base_lr", v); }},
      {"warmup_iters", [](const RunConfig& c) { return fmt_i(c.train.warmup_iters); },
       [](RunConfig& c, const std::string& v) { c.train.warmup_iters = parse_i("warmup_iters", v); }},
      {"max_iters", [](const RunConfig& c) { return fmt_i(c.train.max_iters); },
       [](RunConfig& c, const std::string& v) { c.train.max_iters = parse_i("max_iters", v); }},
      {"batch_size", [](const RunConfig& c) { return fmt_i(c.train.batch_size); },
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_i("batch_size", v); }},
      {"poly_power", [](const RunConfig& c) { return fmt_f(c.train.poly_power); },
       [](RunConfig& c, const std::string& v) { c.train.poly_power = parse_f("poly_power", v); }},
      {"warmup_start_ratio", [](const RunConfig& c) { return fmt_f(c.train.warmup_start_ratio); },
       [](RunConfig& c, const std::string& v) { c.train.warmup_start_ratio = parse_f("warmup_start_ratio", v); }},
      {"adam_beta1", [](const RunConfig& c) { return fmt_f(c.train.beta1); },
       [](RunConfig& c, const std::string& v) { c.train.beta1 = parse_f("adam_beta1", v); }},
      {"adam_beta2", [](const RunConfig& c) { return fmt_f(c.train.beta2); },
       [](RunConfig& c, const std::string& v) { c.train.beta2 = parse_f("adam_beta2", v); }},
      {"adam_eps", [](const RunConfig& c) { return fmt_f(c.train.eps); },
       [](RunConfig& c, const std::string& v) { c.train.eps = parse_f("adam_eps", v); }},
      {"weight_decay", [](const RunConfig& c) { return fmt_f(c.train.weight_decay); },
       [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_f("weight_decay", v); }},
      {"clip_norm", [](const RunConfig& c) { return fmt_f(c.train.clip_norm); },
       [](RunConfig& c, const std::string& v) { c.train.clip_norm = parse_f("clip_norm", v); }},
      {"checkpoint_every", [](const RunConfig& c) { return fmt_i(c.train.checkpoint_every); },
       [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = parse_i("checkpoint_every", v); }},
      {"log_every", [](const RunConfig& c) { return fmt_i(c.train.log_every); },
       [](RunConfig& c, const std::string& v) { c.train.log_every = parse_i("log_every", v); }},

      {"aug_resize_lo", [](const RunConfig& c) { return fmt_f(c.aug.resize_lo); },
       [](RunConfig& c, const std::string& v) { c.aug.resize_lo = parse_f("aug_resize_lo", v); }},
      {"aug_resize_hi", [](const RunConfig& c) { return fmt_f(c.aug.resize_hi); },
       [](RunConfig& c, const std::string& v) { c.aug.resize_hi = parse_f("aug_resize_hi", v); }},
      {"aug_crop_h", [](const RunConfig& c) { return fmt_i(c.aug.crop_h); },
       [](RunConfig& c, const std::string& v) { c.aug.crop_h = parse_i("aug_crop_h", v); }},
      {"aug_crop_w", [](const RunConfig& c) { return fmt_i(c.aug.crop_w); },
       [](RunConfig& c, const std::string& v) { c.aug.crop_w = parse_i("aug_crop_w", v); }},
      {"aug_flip_p", [](const RunConfig& c) { return fmt_f(c.aug.flip_p); },
       [](RunConfig& c, const std::string& v) { c.aug.flip_p = parse_f("aug_flip_p", v); }},
      {"aug_noise_p", [](const RunConfig& c) { return fmt_f(c.aug.noise_p); },
       [](RunConfig& c, const std::string& v) { c.aug.noise_p = parse_f("aug_noise_p", v); }},
      {"aug_blur_p", [](const RunConfig& c) { return fmt_f(c.aug.blur_p); },
       [](RunConfig& c, const std::string& v) { c.aug.blur_p = parse_f("aug_blur_p", v); }},
      {"aug_photometric_p", [](const RunConfig& c) { return fmt_f(c.aug.photometric_p); },
       [](RunConfig& c, const std::string& v) { c.aug.photometric_p = parse_f("aug_photometric_p", v); }},
      {"aug_jpeg_p", [](const RunConfig& c) { return fmt_f(c.aug.jpeg_p); },
       [](RunConfig& c, const std::string& v) { c.aug.jpeg_p = parse_f("aug_jpeg_p", v); }},
      {"aug_jpeg_q_lo", [](const RunConfig& c) { return fmt_i(c.aug.jpeg_q_lo); },
       [](RunConfig& c, const std::string& v) { c.aug.jpeg_q_lo = parse_i("aug_jpeg_q_lo", v); }},
      {"aug_jpeg_q_hi", [](const RunConfig& c) { return fmt_i(c.aug.jpeg_q_hi); },
       [](RunConfig& c, const std::string& v) { c.aug.jpeg_q_hi = parse_i("aug_jpeg_q_hi", v); }},
      {"aug_noise_sigma_lo", [](const RunConfig& c) { return fmt_f(c.aug.noise_sigma_lo); },
       [](RunConfig& c, const std::string& v) { c.aug.noise_sigma_lo = parse_f("aug_noise_sigma_lo", v); }},
      {"aug_noise_sigma_hi", [](const RunConfig& c) { return fmt_f(c.aug.noise_sigma_hi); },
       [](RunConfig& c, const std::string& v) { c.aug.noise_sigma_hi = parse_f("aug_noise_sigma_hi", v); }},
      {"aug_blur_sigma_lo", [](const RunConfig& c) { return fmt_f(c.aug.blur_sigma_lo); },
       [](RunConfig& c, const std::string& v) { c.aug.blur_sigma_lo = parse_f("aug_blur_sigma_lo", v); }},
      {"aug_blur_sigma_hi", [](const RunConfig& c) { return fmt_f(c.aug.blur_sigma_hi); },
       [](RunConfig& c, const std::string& v) { c.aug.blur_sigma_hi = parse_f("aug_blur_sigma_hi", v); }},
      {"aug_brightness_delta", [](const RunConfig& c) { return fmt_f(c.aug.brightness_delta); },
       [](RunConfig& c, const std::string& v) { c.aug.brightness_delta = parse_f("aug_brightness_delta", v); }},
      {"aug_contrast_delta", [](const RunConfig& c) { return fmt_f(c.aug.contrast_delta); },
       [](RunConfig& c, const std::string& v) { c.aug.contrast_delta = parse_f("aug_contrast_delta", v); }},
      {"aug_saturation_delta", [](const RunConfig& c) { return fmt_f(c.aug.saturation_delta); },
       [](RunConfig& c, const std::string& v) { c.aug.saturation_delta = parse_f("aug_saturation_delta", v); }},
      {"aug_hue_delta_deg", [](const RunConfig& c) { return fmt_f(c.aug.hue_delta_deg); },
       [](RunConfig& c, const std::string& v) { c.aug.hue_delta_deg = parse_f("aug_hue_delta_deg", v); }},
  };
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : entries()) {
    if (key == e.key) return &e;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  net.validate();
  loss.validate();
  aug.validate();
  train.validate();
  if (!(threshold >= 0) || !(threshold <= 1)) {
    throw ConfigError("threshold must lie in [0,1]");
  }
  if (synth_n < 1) throw ConfigError("synth_n must be >= 1");
  if (synth_size < 8) throw ConfigError("synth_size must be >= 8");
}

Index parse_fuse_subset(const std::string& s) {
  std::vector<std::string> toks;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    for (char& ch : item) ch = char(std::toupper(static_cast<unsigned char>(ch)));
    toks.push_back(item);
  }
  bool ok = !toks.empty() && toks.size() <= 4;
  for (size_t j = 0; ok && j < toks.size(); ++j) {
    ok = toks[j] == "X" + std::to_string(4 - j);
  }
  if (!ok) {
    throw ConfigError("fuse subset '" + s +
                      "' must be a contiguous deep-to-shallow run starting "
                      "at X4, like X4 or X4,X3,X2,X1");
  }
  return Index(5 - toks.size());
}

std::string fuse_subset_name(Index fuse_lowest) {
  std::string out;
  for (Index i = 4; i >= fuse_lowest; --i) {
    out += (i == 4 ? "" : ",") + ("X" + std::to_string(i));
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Entry& e : entries()) out.push_back(e.key);
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin) {
  struct Pair {
    std::string key, value;
    int line;
  };
  std::vector<Pair> pairs;
  std::istringstream lines(text);
  std::string line;
  int ln = 0;
  while (std::getline(lines, line)) {
    ++ln;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(ln) +
                        ": expected 'key = value', got '" + line + "'");
    }
    Pair p{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), ln};
    if (p.key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(ln) + ": empty key");
    }
    if (!find_entry(p.key)) {
      throw ConfigError(origin + ":" + std::to_string(ln) +
                        ": unknown config key '" + p.key + "'");
    }
    for (const Pair& q : pairs) {
      if (q.key == p.key) {
        throw ConfigError(origin + ":" + std::to_string(ln) +
                          ": duplicate config key '" + p.key +
                          "' (first at line " + std::to_string(q.line) + ")");
      }
    }
    pairs.push_back(std::move(p));
  }
  for (const Pair& p : pairs) {
    if (p.key == "desk_preset") find_entry(p.key)->set(cfg, p.value);
  }
  for (const Pair& p : pairs) {
    if (p.key != "desk_preset") find_entry(p.key)->set(cfg, p.value);
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  RunConfig cfg;
  apply_config_text(cfg, text, path);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + kv + "' must look like key=value");
  }
  std::string key = trim(kv.substr(0, eq));
  std::string value = trim(kv.substr(eq + 1));
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  e->set(cfg, value);
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) {
    out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << resolved_config_text(cfg);
}

}  // namespace tamperloc
