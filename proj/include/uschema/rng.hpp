#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace uschema {

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard, but the standard *distributions* are not, so all transforms
// (uniform doubles, bounded ints, Gaussians) are implemented here by hand.
// Two Rng instances with the same seed produce identical streams on any
// conforming implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 bits of precision.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double gaussian() {
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double stddev) { return gaussian() * stddev; }

  // Independent stream derived from this rng's seed and two labels
  // (e.g. epoch and worker index). Derivation is splitmix64-style mixing,
  // so streams for distinct labels are uncorrelated.
  Rng fork(std::uint64_t a, std::uint64_t b) const {
    std::uint64_t x = seed_;
    x = mix(x + 0x9e3779b97f4a7c15ull + a);
    x = mix(x + 0x9e3779b97f4a7c15ull + b);
    return Rng(x);
  }

  // In-place Fisher-Yates shuffle with this rng's uniform_below.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace uschema
