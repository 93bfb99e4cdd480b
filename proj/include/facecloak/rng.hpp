#pragma once

#include <cmath>
#include <cstdint>

namespace facecloak {

/// Portable seeded generator: xorshift64* seeded through SplitMix64.
///
/// Stream `i` of seed `s` starts from mix(s, i), so every (seed, stream) pair
/// yields the same sequence on every platform. Only integer shifts, xors and
/// multiplies are involved, and conversions to real numbers use the top 53
/// bits, so no standard-library distribution (whose output is
/// implementation-defined) is used anywhere.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), state_(mix(seed, stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent substream `i` of this generator's seed.
  SeededRng substream(std::uint64_t i) const { return SeededRng(seed_, i); }

  std::uint64_t next_u64() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi]; always consumes exactly one draw, even when lo == hi.
  double uniform(double lo, double hi) noexcept {
    const double u = uniform();
    return lo == hi ? lo : lo + (hi - lo) * u;
  }

  /// Uniform integer in [lo, hi] (inclusive); one draw.
  int uniform_int(int lo, int hi) noexcept {
    const double span = static_cast<double>(hi) - lo + 1.0;
    const int v = lo + static_cast<int>(std::floor(uniform() * span));
    return v > hi ? hi : v;
  }

  bool coin() noexcept { return (next_u64() >> 63) != 0; }

  static std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t s = splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
    return s == 0 ? 0x9E3779B97F4A7C15ULL : s;  // xorshift state must be non-zero
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

}  // namespace facecloak
