#include "stpnet/boltzmann.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "stpnet/error.hpp"

namespace stpnet {

namespace {

void require_state(const BoltzmannMachine& machine, std::span<const std::uint8_t> state) {
  if (state.size() != machine.size()) {
    throw DimensionError("state has " + std::to_string(state.size()) + " units, machine has " +
                         std::to_string(machine.size()));
  }
}

double log_sum_exp(std::span<const double> values) {
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace

BoltzmannMachine::BoltzmannMachine(std::size_t n_units)
    : n_(n_units), weights_(n_units * n_units, 0.0), biases_(n_units, 0.0) {}

BoltzmannMachine::BoltzmannMachine(std::size_t n_units, std::vector<double> weights, std::vector<double> biases)
    : n_(n_units), weights_(std::move(weights)), biases_(std::move(biases)) {
  validate();
}

BoltzmannMachine BoltzmannMachine::random(std::size_t n_units, Rng& rng, double weight_range, double bias_range) {
  BoltzmannMachine m(n_units);
  for (std::size_t i = 0; i < n_units; ++i) {
    for (std::size_t j = i + 1; j < n_units; ++j) m.set_weight(i, j, rng.uniform(-weight_range, weight_range));
  }
  for (std::size_t i = 0; i < n_units; ++i) m.set_bias(i, rng.uniform(-bias_range, bias_range));
  return m;
}

void BoltzmannMachine::set_weight(std::size_t i, std::size_t j, double w) {
  if (i == j) throw InvalidArgument("self-coupling w_ii must stay zero");
  weights_[i * n_ + j] = w;
  weights_[j * n_ + i] = w;
}

void BoltzmannMachine::add_weight(std::size_t i, std::size_t j, double dw) {
  if (i == j) throw InvalidArgument("self-coupling w_ii must stay zero");
  weights_[i * n_ + j] += dw;
  weights_[j * n_ + i] = weights_[i * n_ + j];
}

void BoltzmannMachine::validate() const {
  if (weights_.size() != n_ * n_) throw DimensionError("weight matrix must be n_units x n_units");
  if (biases_.size() != n_) throw DimensionError("bias vector must have n_units entries");
  for (std::size_t i = 0; i < n_; ++i) {
    if (weights_[i * n_ + i] != 0.0) throw InvalidArgument("weight diagonal must be zero");
    if (!std::isfinite(biases_[i])) throw InvalidArgument("bias is not finite");
    for (std::size_t j = 0; j < n_; ++j) {
      const double w = weights_[i * n_ + j];
      if (!std::isfinite(w)) throw InvalidArgument("weight is not finite");
      if (w != weights_[j * n_ + i]) throw InvalidArgument("weight matrix is not symmetric");
    }
  }
}

BoltzmannMachine BoltzmannMachine::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != n_) throw DimensionError("permutation length differs from unit count");
  BoltzmannMachine out(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    out.biases_[i] = biases_[perm[i]];
    for (std::size_t j = 0; j < n_; ++j) out.weights_[i * n_ + j] = weights_[perm[i] * n_ + perm[j]];
  }
  return out;
}

std::size_t DiscreteDistribution::n_units() const {
  return static_cast<std::size_t>(std::countr_zero(probs.size()));
}

void DiscreteDistribution::validate() const {
  if (probs.empty() || !std::has_single_bit(probs.size())) {
    throw DimensionError("distribution length must be a power of two");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InvalidArgument("negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("probabilities do not sum to one");
}

std::uint64_t state_index(std::span<const std::uint8_t> state) {
  if (state.size() > 64) throw DimensionError("state index needs at most 64 units");
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i]) index |= std::uint64_t{1} << i;
  }
  return index;
}

BinaryState state_from_index(std::uint64_t index, std::size_t n_units) {
  BinaryState s(n_units);
  for (std::size_t i = 0; i < n_units; ++i) s[i] = static_cast<std::uint8_t>((index >> i) & 1U);
  return s;
}

double energy(const BoltzmannMachine& machine, std::span<const std::uint8_t> state) {
  require_state(machine, state);
  const std::size_t n = machine.size();
  double quadratic = 0.0;
  double linear = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!state[i]) continue;
    linear += machine.bias(i);
    const auto row = machine.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (state[j]) quadratic += row[j];
    }
  }
  return -quadratic / 2.0 - linear;
}

DiscreteDistribution exact_distribution(const BoltzmannMachine& machine, double inv_temperature) {
  const std::size_t n = machine.size();
  if (n > kMaxEnumerationUnits) {
    throw EnumerationTooLarge("exact enumeration supports at most " + std::to_string(kMaxEnumerationUnits) +
                              " units, machine has " + std::to_string(n));
  }
  if (!(inv_temperature > 0.0)) throw InvalidArgument("inverse temperature must be positive");

  // Walk the states in Gray-code order; flipping unit k changes the energy by
  // -/+ (local field of k), and the fields are updated in O(n) per step.
  const std::size_t count = std::size_t{1} << n;
  std::vector<double> log_weight(count);
  std::vector<double> field(machine.biases().begin(), machine.biases().end());
  BinaryState z(n, 0);
  double e = 0.0;
  log_weight[0] = 0.0;
  std::uint64_t index = 0;
  for (std::size_t step = 1; step < count; ++step) {
    const std::size_t k = static_cast<std::size_t>(std::countr_zero(step));
    const auto column = machine.row(k);
    if (z[k]) {
      z[k] = 0;
      e += field[k];
      for (std::size_t i = 0; i < n; ++i) field[i] -= column[i];
    } else {
      z[k] = 1;
      e -= field[k];
      for (std::size_t i = 0; i < n; ++i) field[i] += column[i];
    }
    index ^= std::uint64_t{1} << k;
    log_weight[index] = -inv_temperature * e;
  }

  const double log_z = log_sum_exp(log_weight);
  DiscreteDistribution dist;
  dist.probs.resize(count);
  for (std::size_t s = 0; s < count; ++s) dist.probs[s] = std::exp(log_weight[s] - log_z);
  // Renormalize the rounding residue so the sum is one to machine precision.
  const double total = std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0);
  for (double& p : dist.probs) p /= total;
  return dist;
}

double conditional_on(const BoltzmannMachine& machine, std::span<const std::uint8_t> state, std::size_t k,
                      double inv_temperature) {
  require_state(machine, state);
  if (k >= machine.size()) throw InvalidArgument("unit index " + std::to_string(k) + " out of range");
  const auto row = machine.row(k);
  double field = machine.bias(k);
  for (std::size_t i = 0; i < machine.size(); ++i) {
    if (i != k && state[i]) field += row[i];
  }
  return logistic(inv_temperature * field);
}

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.probs.size() != q.probs.size()) throw DimensionError("distributions differ in length");
  double kl = 0.0;
  for (std::size_t s = 0; s < p.probs.size(); ++s) {
    const double ps = p.probs[s];
    if (ps <= 0.0) continue;
    const double qs = q.probs[s];
    if (qs <= 0.0) return std::numeric_limits<double>::infinity();
    kl += ps * std::log(ps / qs);
  }
  return kl;
}

DiscreteDistribution empirical_distribution(const SampleTrace& trace, std::size_t n_units) {
  if (n_units > kMaxEnumerationUnits) throw EnumerationTooLarge("histogram over more than 20 units");
  std::vector<double> counts(std::size_t{1} << n_units, 0.0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace.valid(i)) continue;
    const auto& s = trace.state(i);
    if (s.size() != n_units) throw DimensionError("trace state length differs from n_units");
    counts[state_index(s)] += 1.0;
    ++total;
  }
  if (total == 0) throw InvalidArgument("trace has no valid samples");
  for (double& c : counts) c /= static_cast<double>(total);
  return DiscreteDistribution{std::move(counts)};
}

DiscreteDistribution marginal_over(const DiscreteDistribution& dist, std::span<const std::size_t> unit_subset) {
  const std::size_t n = dist.n_units();
  if (unit_subset.size() > n) throw InvalidArgument("subset larger than the unit count");
  std::vector<bool> seen(n, false);
  for (std::size_t u : unit_subset) {
    if (u >= n) throw InvalidArgument("subset index " + std::to_string(u) + " out of range");
    if (seen[u]) throw InvalidArgument("subset index " + std::to_string(u) + " repeated");
    seen[u] = true;
  }
  DiscreteDistribution out;
  out.probs.assign(std::size_t{1} << unit_subset.size(), 0.0);
  for (std::size_t s = 0; s < dist.probs.size(); ++s) {
    std::size_t reduced = 0;
    for (std::size_t j = 0; j < unit_subset.size(); ++j) reduced |= ((s >> unit_subset[j]) & 1U) << j;
    out.probs[reduced] += dist.probs[s];
  }
  return out;
}

nlohmann::json to_json(const BoltzmannMachine& machine) {
  return nlohmann::json{{"n_units", machine.size()},
                        {"weights", std::vector<double>(machine.weights().begin(), machine.weights().end())},
                        {"biases", std::vector<double>(machine.biases().begin(), machine.biases().end())}};
}

BoltzmannMachine machine_from_json(const nlohmann::json& doc) {
  try {
    const auto n = doc.at("n_units").get<std::size_t>();
    return BoltzmannMachine(n, doc.at("weights").get<std::vector<double>>(), doc.at("biases").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed machine document: ") + e.what());
  }
}

void save_machine(const BoltzmannMachine& machine, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(machine).dump(1) << '\n';
}

BoltzmannMachine load_machine(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return machine_from_json(nlohmann::json::parse(in, nullptr, true, true));
}

}  // namespace stpnet
