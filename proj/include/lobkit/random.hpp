#pragma once

// Seeded randomness with fixed transforms. std::*_distribution output is
// implementation-defined, so the draws used for reproducible artifacts are
// derived from raw mt19937_64 words here instead.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace lobkit {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Geometric on {0, 1, 2, ...} with success probability p.
  std::int64_t geometric(double p) {
    if (p >= 1.0) return 0;
    return static_cast<std::int64_t>(std::floor(std::log1p(-uniform()) / std::log1p(-p)));
  }

  double normal() {
    // Box-Muller, one value per call.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T> void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

private:
  std::mt19937_64 engine_;
};

} // namespace lobkit
