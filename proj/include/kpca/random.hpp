#pragma once

// Reproducible random numbers.
//
// Engine: xoshiro256** (Blackman & Vigna, 2018), state seeded through
// SplitMix64. Normals use the Marsaglia polar method and bounded integers
// use Lemire's multiply-shift rejection, so the produced streams depend only
// on IEEE-754 arithmetic plus std::log, not on the standard library's
// (implementation-defined) distribution classes.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace kpca {

/// One SplitMix64 output step; also used as a 64-bit mixing function.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives the seed of an independent substream from a master seed.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// Well-known stream identifiers so that the same master seed drives
/// independent, named sources of randomness.
enum class Stream : std::uint64_t {
  Rotation = 1,
  Samples = 2,
  Init = 3,
  Pilot = 4,
  Trials = 5,
  Instances = 6,
};

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }
  Rng(std::uint64_t master, Stream stream) noexcept
      : Rng(substream_seed(master, static_cast<std::uint64_t>(stream))) {}

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
    has_spare_ = false;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept {
    auto wide = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(wide);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        wide = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(wide);
      }
    }
    return static_cast<std::uint64_t>(wide >> 64);
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace kpca
