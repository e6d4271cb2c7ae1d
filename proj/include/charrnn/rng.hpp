#pragma once

#include <cstdint>

namespace charrnn {

// SplitMix64 (Steele, Lea & Flood 2014). The stream for a given seed is part
// of the on-disk reproducibility contract: weight init, shuffling, dropout
// masks and sampling all draw from it, so the mixing constants and the
// derived uniform/normal transforms below must not change.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept;

  /// Independent child stream; advances this generator by one draw.
  Rng split() noexcept { return Rng(next_u64()); }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Mixes a base seed with a stream tag so related seeds do not share streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace charrnn
