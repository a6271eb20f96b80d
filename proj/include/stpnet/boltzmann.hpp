#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpnet/rng.hpp"
#include "stpnet/trace.hpp"

namespace stpnet {

/// Largest unit count for which the full joint distribution is enumerated.
inline constexpr std::size_t kMaxEnumerationUnits = 20;

/// Symmetric, zero-diagonal weight matrix plus bias vector defining
/// E(z) = -z^T W z / 2 - z^T b. Weights are dense and row-major.
class BoltzmannMachine {
 public:
  BoltzmannMachine() = default;
  explicit BoltzmannMachine(std::size_t n_units);
  /// Validates symmetry, the zero diagonal and finiteness.
  BoltzmannMachine(std::size_t n_units, std::vector<double> weights, std::vector<double> biases);

  /// Weights and biases drawn uniformly from [-weight_range, weight_range] and
  /// [-bias_range, bias_range].
  static BoltzmannMachine random(std::size_t n_units, Rng& rng, double weight_range, double bias_range);

  std::size_t size() const noexcept { return n_; }

  double weight(std::size_t i, std::size_t j) const { return weights_[i * n_ + j]; }
  /// Sets w_ij and w_ji. Setting a diagonal entry is an error.
  void set_weight(std::size_t i, std::size_t j, double w);
  void add_weight(std::size_t i, std::size_t j, double dw);

  double bias(std::size_t i) const { return biases_[i]; }
  void set_bias(std::size_t i, double b) { biases_[i] = b; }
  void add_bias(std::size_t i, double db) { biases_[i] += db; }

  std::span<const double> row(std::size_t i) const { return {weights_.data() + i * n_, n_}; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> biases() const { return biases_; }

  void validate() const;

  /// Units reordered so that new unit i is old unit perm[i].
  BoltzmannMachine permuted(std::span<const std::size_t> perm) const;

  friend bool operator==(const BoltzmannMachine&, const BoltzmannMachine&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> weights_;
  std::vector<double> biases_;
};

/// Probability vector over all 2^n joint states; bit i of the index is z_i.
struct DiscreteDistribution {
  std::vector<double> probs;

  std::size_t n_units() const;
  void validate() const;
};

/// Little-endian state index: bit i is z_i. Requires at most 64 units.
std::uint64_t state_index(std::span<const std::uint8_t> state);
BinaryState state_from_index(std::uint64_t index, std::size_t n_units);

double energy(const BoltzmannMachine& machine, std::span<const std::uint8_t> state);

/// p(s) proportional to exp(-beta E(s)), normalized with log-sum-exp.
DiscreteDistribution exact_distribution(const BoltzmannMachine& machine, double inv_temperature = 1.0);

/// sigma(beta (sum_{i != k} w_ki z_i + b_k)).
double conditional_on(const BoltzmannMachine& machine, std::span<const std::uint8_t> state, std::size_t k,
                      double inv_temperature = 1.0);

/// KL(p || q) in nats. Returns +infinity when p has mass where q has none.
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Normalized histogram over the valid entries of a trace.
DiscreteDistribution empirical_distribution(const SampleTrace& trace, std::size_t n_units);

/// Distribution of the listed units (new bit j is unit subset[j]); all other
/// units are summed out.
DiscreteDistribution marginal_over(const DiscreteDistribution& dist, std::span<const std::size_t> unit_subset);

nlohmann::json to_json(const BoltzmannMachine& machine);
BoltzmannMachine machine_from_json(const nlohmann::json& doc);
void save_machine(const BoltzmannMachine& machine, const std::filesystem::path& path);
BoltzmannMachine load_machine(const std::filesystem::path& path);

}  // namespace stpnet
