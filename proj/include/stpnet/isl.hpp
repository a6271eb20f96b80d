#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "stpnet/rng.hpp"
#include "stpnet/trace.hpp"

namespace stpnet::eval {

/// Indirect sampling likelihood: a product-of-Bernoulli kernel density
/// estimate built from generated samples, scored on held-out data.
struct IslConfig {
  double beta = 0.95;  ///< probability that a kernel reproduces a pixel; (0.5, 1]
  void check() const;
};

/// Binary vectors packed 64 bits per word for fast mismatch counting.
class PackedBits {
 public:
  explicit PackedBits(std::size_t n_bits) : n_bits_(n_bits), words_((n_bits + 63) / 64) {}
  void push(const BinaryState& bits);
  std::size_t size() const { return count_; }
  std::size_t n_bits() const { return n_bits_; }
  std::size_t words() const { return words_; }
  const std::uint64_t* row(std::size_t i) const { return data_.data() + i * words_; }
  /// Hamming distance between row i of this set and row j of `other`.
  std::uint64_t mismatches(std::size_t i, const PackedBits& other, std::size_t j) const;

 private:
  std::size_t n_bits_;
  std::size_t words_;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> data_;
};

/// Mean over the test set of
///   log (1/N) sum_i beta^{m_i} (1 - beta)^{d - m_i},
/// m_i being the number of bits test item and generated sample i share.
/// Evaluated with log-sum-exp so d = 784 does not underflow.
double isl_log_likelihood(std::span<const BinaryState> test, std::span<const BinaryState> generated,
                          const IslConfig& config = {});

/// ISL on growing prefixes of `generated`; checkpoints must be strictly
/// increasing and at most generated.size(). Costs one pass over the samples.
std::vector<std::pair<std::size_t, double>> isl_curve(std::span<const BinaryState> test,
                                                      std::span<const BinaryState> generated,
                                                      std::span<const std::size_t> checkpoints,
                                                      const IslConfig& config = {});

/// Independent per-pixel Bernoulli draws with the training-set pixel means.
std::vector<BinaryState> pom_baseline(std::span<const BinaryState> training, std::size_t n_samples, Rng& rng);

/// Draws with replacement from a base set (e.g. well-mixed tempering samples).
std::vector<BinaryState> opt_baseline(std::span<const BinaryState> base, std::size_t n_samples, Rng& rng);

/// "n_samples,isl" with one row per checkpoint.
void write_isl_csv(std::ostream& out, std::span<const std::pair<std::size_t, double>> curve);

}  // namespace stpnet::eval
