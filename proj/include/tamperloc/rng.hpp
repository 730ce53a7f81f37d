#pragma once

#include "tamperloc/types.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tamperloc {

// Counter-based generator: draw k is a pure function of (seed, k), so streams
// can be replayed or split without shared state. Substreams derive by hashing
// the parent seed with a label.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * 0x9E3779B97F4A7C15ull);
  }

  RngStream derive(std::uint64_t label) const {
    return RngStream(mix(seed_ ^ mix(label + 0x632BE59BD9B4E019ull)));
  }

  RngStream derive(std::string_view label) const {
    return derive(fnv1a(label));
  }

  // Uniform in [0, 1) with 53 random bits.
  Scalar uniform() {
    return static_cast<Scalar>(next_u64() >> 11) * 0x1p-53;
  }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(Scalar p) { return uniform() < p; }

  Scalar normal() {
    // Box-Muller; u1 shifted away from zero so the log is finite.
    const Scalar u1 = uniform();
    const Scalar u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
  }

  Scalar normal(Scalar mean, Scalar stddev) { return mean + stddev * normal(); }

  // Normal truncated to +-2 sigma, as used for weight init.
  Scalar truncated_normal(Scalar stddev) {
    Scalar z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return stddev * z;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001B3ull;
    }
    return h;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace tamperloc
