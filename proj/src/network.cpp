#include "tamperloc/network.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tamperloc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

NetConfig NetConfig::desk() {
  NetConfig cfg;
  cfg.enc = EncoderConfig::desk();
  cfg.dec = DecoderConfig::desk();
  return cfg;
}

void NetConfig::validate() const {
  enc.validate();
  dec.validate();
}

Network::Network(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  enc_ = std::make_unique<Encoder>(reg_, cfg_.enc);
  dec_ = std::make_unique<Decoder>(reg_, cfg_.dec, cfg_.enc.C);
}

void Network::init(std::uint64_t seed) {
  reg_.initialize(seed, cfg_.enc.layer_scale_init);
}

StageOutputs Network::encode(const Tensor& img) const {
  return enc_->encode(img);
}

LocalizationMap Network::forward(const Tensor& img) const {
  return dec_->localize(enc_->encode(img), img.h(), img.w());
}

namespace {

constexpr const char* kMagic = "TAMPERLOC-CKPT 1";

std::string fmt_scalar(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_ckpt(const std::string& path, const std::string& why) {
  throw IoError(path + ": " + why);
}

}  // namespace

void Network::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << kMagic << "\n";
  out << "enc_c " << cfg_.enc.C << "\n";
  out << "enc_blocks " << cfg_.enc.blocks[0] << " " << cfg_.enc.blocks[1]
      << " " << cfg_.enc.blocks[2] << " " << cfg_.enc.blocks[3] << "\n";
  out << "enc_ls " << fmt_scalar(cfg_.enc.layer_scale_init) << "\n";
  out << "enc_kind " << cfg_.enc.block_kind << "\n";
  out << "dec_fpn " << cfg_.dec.fpn_channels << "\n";
  out << "dec_bins";
  for (Index b : cfg_.dec.ppm_bins) out << " " << b;
  out << "\n";
  out << "dec_fuse_lowest " << cfg_.dec.fuse_lowest << "\n";
  out << "params " << reg_.size() << "\n";
  for (const ParamInfo& p : reg_.all()) {
    const Shape4& s = p.tensor.shape();
    out << p.name << " " << s.n << " " << s.c << " " << s.h << " " << s.w
        << "\n";
  }
  out << "DATA\n";
  for (const ParamInfo& p : reg_.all()) {
    const ArrayX& d = p.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(sizeof(Scalar)) * d.size());
  }
  if (!out) throw IoError(path + ": write failed");
}

Network Network::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    bad_ckpt(path, "bad magic line '" + line + "'");
  }

  NetConfig cfg;
  Index param_count = -1;
  while (std::getline(in, line)) {
    if (line == "DATA") bad_ckpt(path, "parameter list missing");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "enc_c") {
      ls >> cfg.enc.C;
    } else if (key == "enc_blocks") {
      ls >> cfg.enc.blocks[0] >> cfg.enc.blocks[1] >> cfg.enc.blocks[2] >>
          cfg.enc.blocks[3];
    } else if (key == "enc_ls") {
      ls >> cfg.enc.layer_scale_init;
    } else if (key == "enc_kind") {
      ls >> cfg.enc.block_kind;
    } else if (key == "dec_fpn") {
      ls >> cfg.dec.fpn_channels;
    } else if (key == "dec_bins") {
      cfg.dec.ppm_bins.clear();
      Index b;
      while (ls >> b) cfg.dec.ppm_bins.push_back(b);
      if (ls.eof() && !cfg.dec.ppm_bins.empty()) ls.clear();
    } else if (key == "dec_fuse_lowest") {
      ls >> cfg.dec.fuse_lowest;
    } else if (key == "params") {
      ls >> param_count;
      break;
    } else {
      bad_ckpt(path, "unexpected header key '" + key + "'");
    }
    if (ls.fail()) bad_ckpt(path, "malformed header line '" + line + "'");
  }
  if (param_count < 0) bad_ckpt(path, "missing params count");

  Network net(cfg);
  if (param_count != net.reg_.size()) {
    bad_ckpt(path, "parameter count " + std::to_string(param_count) +
                       " does not match the configured network (" +
                       std::to_string(net.reg_.size()) + ")");
  }
  for (Index i = 0; i < param_count; ++i) {
    if (!std::getline(in, line)) bad_ckpt(path, "truncated parameter list");
    std::istringstream ls(line);
    std::string name;
    Shape4 s{};
    ls >> name >> s.n >> s.c >> s.h >> s.w;
    if (ls.fail()) bad_ckpt(path, "malformed parameter line '" + line + "'");
    const ParamInfo& p = net.reg_.at(i);
    if (name != p.name || !(s == p.tensor.shape())) {
      bad_ckpt(path, "parameter " + std::to_string(i) + ": expected " +
                         p.name + " " + p.tensor.shape().str() + ", found " +
                         name + " " + s.str());
    }
  }
  if (!std::getline(in, line) || line != "DATA") {
    bad_ckpt(path, "missing DATA sentinel");
  }
  for (Index i = 0; i < param_count; ++i) {
    ArrayX& d = net.reg_.at(i).tensor.raw_data();
    in.read(reinterpret_cast<char*>(d.data()),
            static_cast<std::streamsize>(sizeof(Scalar)) * d.size());
    if (in.gcount() !=
        static_cast<std::streamsize>(sizeof(Scalar)) * d.size()) {
      bad_ckpt(path, "truncated data for parameter " + net.reg_.at(i).name);
    }
  }
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1) {
    bad_ckpt(path, "trailing bytes after parameter data");
  }
  return net;
}

}  // namespace tamperloc
