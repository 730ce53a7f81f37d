#pragma once

#include <memory>
#include <string>

#include "tamperloc/decoder.hpp"
#include "tamperloc/encoder.hpp"

namespace tamperloc {

struct NetConfig {
  EncoderConfig enc;
  DecoderConfig dec;

  static NetConfig desk();
  void validate() const;
};

// Encoder + decoder with a shared parameter registry and the checkpoint
// format: plain-text header (config, parameter names and shapes in
// registration order), then raw little-endian doubles.
class Network {
 public:
  explicit Network(const NetConfig& cfg);

  void init(std::uint64_t seed);
  StageOutputs encode(const Tensor& img) const;
  LocalizationMap forward(const Tensor& img) const;

  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }
  const NetConfig& config() const { return cfg_; }
  Encoder& encoder() { return *enc_; }
  Decoder& decoder() { return *dec_; }

  void save(const std::string& path) const;
  static Network load(const std::string& path);

 private:
  NetConfig cfg_;
  ParamRegistry reg_;
  std::unique_ptr<Encoder> enc_;
  std::unique_ptr<Decoder> dec_;
};

}  // namespace tamperloc
