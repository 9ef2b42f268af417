#pragma once

#include <cmath>
#include <cstdint>

namespace cipherpatch {

// SplitMix64 keyed generator. The output stream is a pure function of the
// initial key and is bit-identical on every platform (all arithmetic is
// unsigned 64-bit, mod 2^64). State is held by value; advance with next().
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t key) : state_(key) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state() const { return state_; }

  // Uniform double in [0, 1), 53 significant bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Box-Muller gaussian sampler on top of SplitMix64. Emits a fixed,
// key-determined sequence; the second value of each pair is cached so no
// words are discarded.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t key) : rng_(key) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 =
        static_cast<double>((rng_.next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = rng_.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  float next_scaled(float scale) { return static_cast<float>(next()) * scale; }

 private:
  SplitMix64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cipherpatch
