#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stpnet {

/// Seeded pseudo-random source owned by exactly one sampler or simulation.
///
/// Uniform variates are derived from the raw 64-bit engine output so the
/// stream is identical across standard-library implementations; normals go
/// through std::normal_distribution and are only reproducible per toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Exponential waiting time with the given rate (events per unit time).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Derive an independent child seed, e.g. one per worker or per grid point.
  std::uint64_t split() { return engine_() ^ 0x9E3779B97F4A7C15ULL; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace stpnet
