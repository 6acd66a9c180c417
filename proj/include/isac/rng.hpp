#ifndef ISAC_RNG_HPP
#define ISAC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <utility>

#include "isac/types.hpp"

namespace isac {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/**
 * Deterministic random stream (xoshiro256**) with counter-based splitting.
 *
 * All draws go through hand-rolled transforms instead of <random>
 * distributions so that a given seed replays bit-identically on any
 * platform. `fork(i)` derives an independent child stream, which is how
 * Monte-Carlo trials and sweep points get order-independent randomness.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = detail::splitmix64(s);
  }

  Rng fork(std::uint64_t stream) const {
    std::uint64_t s = state_[0] ^ (0x6c62272e07bb0142ULL * (stream + 1));
    Rng child(0);
    for (auto& word : child.state_) word = detail::splitmix64(s);
    return child;
  }

  std::uint64_t next_u64() {
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

  /// Uniform draw in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller (no <random> for reproducibility).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0;
    do {
      u1 = uniform();
    } while (u1 <= 0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

  /// Circularly symmetric complex normal with E|z|^2 = variance.
  Complex complex_normal(double variance = 1.0) {
    const double scale = std::sqrt(variance / 2.0);
    return {scale * normal(), scale * normal()};
  }

  /// Exponential with the given mean.
  double exponential(double mean) {
    double u = 0;
    do {
      u = uniform();
    } while (u <= 0);
    return -mean * std::log(u);
  }

  /// In-place Fisher-Yates shuffle.
  template <typename Vec>
  void shuffle(Vec& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4] = {};
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace isac

#endif  // ISAC_RNG_HPP
