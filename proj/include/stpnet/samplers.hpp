#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "stpnet/boltzmann.hpp"
#include "stpnet/rng.hpp"
#include "stpnet/trace.hpp"

namespace stpnet::sampling {

/// Bipartite unit layout. Units are ordered visible, then label, then hidden;
/// labels belong to the visible block for sampling and training.
struct RbmLayout {
  std::size_t n_visible = 0;
  std::size_t n_hidden = 0;
  std::size_t n_label = 0;

  std::size_t n_units() const { return n_visible + n_label + n_hidden; }
  /// Size of the visible block (visible + label units).
  std::size_t n_outer() const { return n_visible + n_label; }
  std::size_t label_begin() const { return n_visible; }
  std::size_t hidden_begin() const { return n_visible + n_label; }

  /// Throws unless the machine has the right size and no within-block weights.
  void check(const BoltzmannMachine& machine) const;
};

/// Bipartite machine: visible+label to hidden weights ~ U(-weight_range,
/// weight_range), all biases ~ U(-bias_range, bias_range).
BoltzmannMachine random_rbm(const RbmLayout& layout, Rng& rng, double weight_range, double bias_range);

/// Strictly decreasing inverse temperatures starting at beta = 1 (index 0).
class TemperatureLadder {
 public:
  explicit TemperatureLadder(std::vector<double> betas);
  /// K equidistant values from 1 down to beta_min.
  static TemperatureLadder equidistant(std::size_t k, double beta_min);

  std::size_t size() const noexcept { return betas_.size(); }
  double beta(std::size_t k) const { return betas_[k]; }
  std::span<const double> betas() const { return betas_; }

 private:
  std::vector<double> betas_;
};

/// a / (b + t), used for learning rates and tempering adaptation gains.
struct RateSchedule {
  double numerator = 1.0;
  double offset = 1.0;
  double at(double t) const { return numerator / (offset + t); }
};

/// Adaptive simulated tempering chain state.
///
/// Adaptive weights grow geometrically, so they are kept as logarithms;
/// `weight(i)` exponentiates on demand. `step` counts completed steps, the
/// step in progress uses gamma at t = step + 1.
struct AstState {
  TemperatureLadder ladder;
  std::vector<double> log_weights;
  std::size_t index = 0;
  std::uint64_t step = 0;
  RateSchedule gamma{90.0, 150.0};

  explicit AstState(TemperatureLadder ladder_, RateSchedule gamma_ = {90.0, 150.0});

  double weight(std::size_t i) const;
  void check() const;
};

/// One sequential sweep over all units in ascending index order.
BinaryState gibbs_sweep(const BoltzmannMachine& machine, const BinaryState& state, double inv_temperature, Rng& rng);

/// Hidden block given the visible block, then the visible block given hidden.
BinaryState block_gibbs_sweep(const BoltzmannMachine& machine, const RbmLayout& layout, const BinaryState& state,
                              Rng& rng, double inv_temperature = 1.0);

/// One tempering step: a sweep at the current temperature, a +-1 ladder
/// proposal (rejected at the ends), acceptance with the weight-corrected
/// Metropolis ratio, then the adaptive weight update. When `layout` is given
/// the sweep is a block sweep.
std::pair<BinaryState, AstState> ast_step(const BoltzmannMachine& machine, const BinaryState& state,
                                          const AstState& ast, Rng& rng, const RbmLayout* layout = nullptr);

/// Reusable single-chain sampler. Owns its scratch buffers; the machine must
/// outlive it.
class Chain {
 public:
  Chain(const BoltzmannMachine& machine, BinaryState initial, const RbmLayout* layout = nullptr);

  void sweep(Rng& rng, double inv_temperature = 1.0);
  /// Returns true when the chain sits at beta = 1 after the step.
  bool ast_step(AstState& ast, Rng& rng);

  const BinaryState& state() const noexcept { return state_; }
  void set_state(BinaryState s);
  /// Units that are never resampled (pattern completion, classification).
  void set_frozen(std::vector<std::uint8_t> frozen);
  double energy() const;
  /// Exchange states with another chain over the same machine.
  void swap_state(Chain& other) noexcept;

 private:
  void full_sweep(Rng& rng, double beta);
  void block_sweep(Rng& rng, double beta);
  void sync_values();

  const BoltzmannMachine* machine_;
  const RbmLayout* layout_;
  BinaryState state_;
  std::vector<double> values_;
  std::vector<std::uint8_t> frozen_;
};

/// `n_sweeps` recorded sweeps; timestamps are sweep indices starting at 1.
SampleTrace run_gibbs(const BoltzmannMachine& machine, BinaryState initial, std::size_t n_sweeps, Rng& rng,
                      const RbmLayout* layout = nullptr, double inv_temperature = 1.0);

/// Every step is recorded; validity is true iff the chain is at beta = 1.
SampleTrace run_ast(const BoltzmannMachine& machine, BinaryState initial, AstState& ast, std::size_t n_steps,
                    Rng& rng, const RbmLayout* layout = nullptr, std::vector<std::size_t>* level_visits = nullptr);

/// Fraction of trace entries flagged valid.
double ast_effective_rate(const SampleTrace& trace);

struct TrainingSchedule {
  std::uint64_t iterations = 1000;  ///< parameter updates (T)
  std::size_t batch_size = 10;      ///< N
  RateSchedule learning_rate{10.0, 2000.0};
  RateSchedule gamma{90.0, 150.0};
  std::size_t ladder_size = 20;
  double ladder_min_beta = 0.9;
  /// Independent (fixed, tempered) particle pairs in the negative phase.
  std::size_t chains = 1;
  /// Start visible biases at the log-odds of the (Laplace-smoothed) data
  /// marginals instead of zero. Without it, pixels that are never on in the
  /// data keep a weak bias and the trained machine retains a spurious
  /// all-hidden-off mode that the persistent chains never visit.
  bool data_bias_init = false;

  void check() const;
};

/// Weight and bias increments before scaling by the learning rate.
struct Gradient {
  std::vector<double> weights;  ///< n_outer x n_hidden, row-major
  std::vector<double> biases;   ///< n_units
};

/// Persistent-chain trainer with a coupled tempered particle per chain.
class CastTrainer {
 public:
  CastTrainer(const RbmLayout& layout, const TrainingSchedule& schedule, std::uint64_t seed);
  CastTrainer(const CastTrainer&) = delete;
  CastTrainer& operator=(const CastTrainer&) = delete;

  /// Data statistics minus model statistics for one batch. Advances the
  /// negative-phase particles by one step.
  Gradient gradient(std::span<const BinaryState> batch);
  /// Only the data term (hidden units at their exact conditional means).
  Gradient data_statistics(std::span<const BinaryState> batch) const;
  /// Only the model term, from the beta = 1 particles after one step.
  Gradient model_statistics();

  void apply(const Gradient& g, double learning_rate);
  /// Sets the visible-block biases to log((c + 1) / (n - c + 1)) where c
  /// counts the items with the unit on.
  void init_visible_biases(std::span<const BinaryState> dataset);
  /// gradient + apply with the scheduled learning rate.
  void update(std::span<const BinaryState> batch);

  const BoltzmannMachine& machine() const noexcept { return machine_; }
  BoltzmannMachine& machine() noexcept { return machine_; }
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::size_t swaps() const noexcept { return swaps_; }
  const AstState& tempering(std::size_t chain = 0) const { return tempered_state_[chain]; }

 private:
  RbmLayout layout_;
  TrainingSchedule schedule_;
  Rng rng_;
  BoltzmannMachine machine_;
  std::vector<Chain> fixed_;
  std::vector<Chain> tempered_;
  std::vector<AstState> tempered_state_;
  std::uint64_t iteration_ = 0;
  std::size_t swaps_ = 0;
};

using TrainingProgress = std::function<void(std::uint64_t iteration, const BoltzmannMachine&)>;

/// Trains on visible+label vectors (each of length layout.n_outer()).
BoltzmannMachine cast_train(const RbmLayout& layout, std::span<const BinaryState> dataset,
                            const TrainingSchedule& schedule, Rng& rng, const TrainingProgress& progress = {});

}  // namespace stpnet::sampling
