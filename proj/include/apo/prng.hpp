#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace apo {

// Counter-based 64-bit PRNG (SplitMix64). The state advances by a fixed Weyl
// increment and every output is a finalized hash of the counter, so streams
// replay exactly on any platform and can be forked without coordination.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller without a cached spare: two uniforms per draw, so the stream
  // position after k draws does not depend on call history.
  double next_gaussian() {
    const double u1 = 1.0 - next_unit();  // (0, 1]
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Independent substream keyed by `stream`; does not advance this generator.
  Rng child(uint64_t stream) const {
    return Rng(mix(state_ ^ mix(stream + 0x632BE59BD9B4E019ull)));
  }

  uint64_t state() const { return state_; }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace apo
