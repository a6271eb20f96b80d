#include "stpnet/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stpnet/error.hpp"
#include "stpnet/simd/kernels.hpp"

namespace stpnet::sampling {

void RbmLayout::check(const BoltzmannMachine& machine) const {
  if (machine.size() != n_units()) {
    throw DimensionError("layout describes " + std::to_string(n_units()) + " units, machine has " +
                         std::to_string(machine.size()));
  }
  const std::size_t hb = hidden_begin();
  for (std::size_t i = 0; i < machine.size(); ++i) {
    const bool i_hidden = i >= hb;
    const auto row = machine.row(i);
    for (std::size_t j = 0; j < machine.size(); ++j) {
      if ((j >= hb) == i_hidden && row[j] != 0.0) throw InvalidArgument("machine has within-layer weights");
    }
  }
}

BoltzmannMachine random_rbm(const RbmLayout& layout, Rng& rng, double weight_range, double bias_range) {
  if (layout.n_outer() == 0 || layout.n_hidden == 0) throw InvalidArgument("layout needs visible and hidden units");
  if (!(weight_range >= 0.0) || !(bias_range >= 0.0)) throw InvalidArgument("ranges must be non-negative");
  BoltzmannMachine m(layout.n_units());
  for (std::size_t i = 0; i < layout.n_outer(); ++i)
    for (std::size_t j = layout.hidden_begin(); j < layout.n_units(); ++j)
      m.set_weight(i, j, rng.uniform(-weight_range, weight_range));
  for (std::size_t i = 0; i < layout.n_units(); ++i) m.set_bias(i, rng.uniform(-bias_range, bias_range));
  return m;
}

TemperatureLadder::TemperatureLadder(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw InvalidArgument("temperature ladder needs at least one level");
  if (betas_.front() != 1.0) throw InvalidArgument("temperature ladder must start at beta = 1");
  for (std::size_t k = 1; k < betas_.size(); ++k) {
    if (!(betas_[k] < betas_[k - 1]) || !(betas_[k] > 0.0)) {
      throw InvalidArgument("temperature ladder must be strictly decreasing within (0, 1]");
    }
  }
}

TemperatureLadder TemperatureLadder::equidistant(std::size_t k, double beta_min) {
  if (k == 0) throw InvalidArgument("temperature ladder needs at least one level");
  std::vector<double> betas(k, 1.0);
  for (std::size_t i = 1; i < k; ++i) {
    betas[i] = 1.0 - (1.0 - beta_min) * static_cast<double>(i) / static_cast<double>(k - 1);
  }
  return TemperatureLadder(std::move(betas));
}

AstState::AstState(TemperatureLadder ladder_, RateSchedule gamma_)
    : ladder(std::move(ladder_)), log_weights(ladder.size(), 0.0), gamma(gamma_) {}

double AstState::weight(std::size_t i) const { return std::exp(log_weights.at(i)); }

void AstState::check() const {
  if (log_weights.size() != ladder.size()) throw DimensionError("one adaptive weight per ladder level");
  if (index >= ladder.size()) throw InvalidArgument("ladder index out of range");
  for (double lw : log_weights) {
    if (!std::isfinite(lw)) throw InvalidArgument("adaptive weights must be positive and finite");
  }
}

// ---------------------------------------------------------------------------

Chain::Chain(const BoltzmannMachine& machine, BinaryState initial, const RbmLayout* layout)
    : machine_(&machine), layout_(layout), state_(std::move(initial)) {
  if (state_.size() != machine.size()) throw DimensionError("initial state length differs from machine size");
  if (layout_) layout_->check(machine);
  frozen_.assign(state_.size(), 0);
  sync_values();
}

void Chain::sync_values() {
  values_.resize(state_.size());
  for (std::size_t i = 0; i < state_.size(); ++i) values_[i] = state_[i];
}

void Chain::set_state(BinaryState s) {
  if (s.size() != machine_->size()) throw DimensionError("state length differs from machine size");
  state_ = std::move(s);
  sync_values();
}

void Chain::set_frozen(std::vector<std::uint8_t> frozen) {
  if (frozen.size() != state_.size()) throw DimensionError("frozen mask length differs from machine size");
  frozen_ = std::move(frozen);
}

void Chain::swap_state(Chain& other) noexcept {
  state_.swap(other.state_);
  values_.swap(other.values_);
}

void Chain::sweep(Rng& rng, double inv_temperature) {
  if (layout_) {
    block_sweep(rng, inv_temperature);
  } else {
    full_sweep(rng, inv_temperature);
  }
}

void Chain::full_sweep(Rng& rng, double beta) {
  const auto& k = simd::kernels();
  const std::size_t n = state_.size();
  for (std::size_t u = 0; u < n; ++u) {
    if (frozen_[u]) continue;
    const double field = k.dot(machine_->row(u).data(), values_.data(), n) + machine_->bias(u);
    const std::uint8_t bit = rng.bernoulli(logistic(beta * field)) ? 1 : 0;
    state_[u] = bit;
    values_[u] = bit;
  }
}

void Chain::block_sweep(Rng& rng, double beta) {
  const auto& k = simd::kernels();
  const std::size_t n = state_.size();
  const std::size_t outer = layout_->n_outer();
  const std::size_t hb = layout_->hidden_begin();
  for (std::size_t j = hb; j < n; ++j) {
    if (frozen_[j]) continue;
    const double field = k.dot(machine_->row(j).data(), values_.data(), outer) + machine_->bias(j);
    const std::uint8_t bit = rng.bernoulli(logistic(beta * field)) ? 1 : 0;
    state_[j] = bit;
    values_[j] = bit;
  }
  for (std::size_t i = 0; i < outer; ++i) {
    if (frozen_[i]) continue;
    const double field = k.dot(machine_->row(i).data() + hb, values_.data() + hb, n - hb) + machine_->bias(i);
    const std::uint8_t bit = rng.bernoulli(logistic(beta * field)) ? 1 : 0;
    state_[i] = bit;
    values_[i] = bit;
  }
}

double Chain::energy() const {
  const auto& k = simd::kernels();
  const std::size_t n = state_.size();
  const double linear = k.dot(machine_->biases().data(), values_.data(), n);
  double quadratic = 0.0;
  if (layout_) {
    const std::size_t outer = layout_->n_outer();
    for (std::size_t j = layout_->hidden_begin(); j < n; ++j) {
      if (state_[j]) quadratic += k.dot(machine_->row(j).data(), values_.data(), outer);
    }
    return -quadratic - linear;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (state_[i]) quadratic += k.dot(machine_->row(i).data(), values_.data(), n);
  }
  return -quadratic / 2.0 - linear;
}

bool Chain::ast_step(AstState& ast, Rng& rng) {
  const std::size_t levels = ast.ladder.size();
  const double beta = ast.ladder.beta(ast.index);
  sweep(rng, beta);

  // Symmetric +-1 proposal; stepping off either end of the ladder is rejected.
  const bool up = rng.bernoulli(0.5);
  const double u = rng.uniform();
  if ((up && ast.index + 1 < levels) || (!up && ast.index > 0)) {
    const std::size_t proposed = up ? ast.index + 1 : ast.index - 1;
    const double log_accept = (beta - ast.ladder.beta(proposed)) * energy() + ast.log_weights[ast.index] -
                              ast.log_weights[proposed];
    if (log_accept >= 0.0 || u < std::exp(log_accept)) ast.index = proposed;
  }
  ++ast.step;
  ast.log_weights[ast.index] += std::log1p(ast.gamma.at(static_cast<double>(ast.step)));
  return ast.index == 0;
}

// ---------------------------------------------------------------------------

BinaryState gibbs_sweep(const BoltzmannMachine& machine, const BinaryState& state, double inv_temperature, Rng& rng) {
  Chain chain(machine, state);
  chain.sweep(rng, inv_temperature);
  return chain.state();
}

BinaryState block_gibbs_sweep(const BoltzmannMachine& machine, const RbmLayout& layout, const BinaryState& state,
                              Rng& rng, double inv_temperature) {
  Chain chain(machine, state, &layout);
  chain.sweep(rng, inv_temperature);
  return chain.state();
}

std::pair<BinaryState, AstState> ast_step(const BoltzmannMachine& machine, const BinaryState& state,
                                          const AstState& ast, Rng& rng, const RbmLayout* layout) {
  ast.check();
  AstState next = ast;
  Chain chain(machine, state, layout);
  chain.ast_step(next, rng);
  return {chain.state(), std::move(next)};
}

SampleTrace run_gibbs(const BoltzmannMachine& machine, BinaryState initial, std::size_t n_sweeps, Rng& rng,
                      const RbmLayout* layout, double inv_temperature) {
  Chain chain(machine, std::move(initial), layout);
  SampleTrace trace(machine.size());
  trace.reserve(n_sweeps);
  for (std::size_t s = 1; s <= n_sweeps; ++s) {
    chain.sweep(rng, inv_temperature);
    trace.push(chain.state(), static_cast<double>(s));
  }
  return trace;
}

SampleTrace run_ast(const BoltzmannMachine& machine, BinaryState initial, AstState& ast, std::size_t n_steps,
                    Rng& rng, const RbmLayout* layout, std::vector<std::size_t>* level_visits) {
  ast.check();
  Chain chain(machine, std::move(initial), layout);
  SampleTrace trace(machine.size());
  trace.reserve(n_steps);
  if (level_visits) level_visits->assign(ast.ladder.size(), 0);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    const bool valid = chain.ast_step(ast, rng);
    if (level_visits) ++(*level_visits)[ast.index];
    trace.push(chain.state(), static_cast<double>(s), valid);
  }
  return trace;
}

double ast_effective_rate(const SampleTrace& trace) {
  if (trace.empty()) throw InvalidArgument("empty trace");
  return static_cast<double>(trace.valid_count()) / static_cast<double>(trace.size());
}

// ---------------------------------------------------------------------------

void TrainingSchedule::check() const {
  if (iterations == 0) throw InvalidArgument("training needs at least one iteration");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(learning_rate.numerator > 0 && learning_rate.offset > 0)) throw InvalidArgument("learning-rate schedule must be positive");
  if (!(gamma.numerator >= 0 && gamma.offset > 0)) throw InvalidArgument("gamma schedule must be positive");
  if (ladder_size == 0 || !(ladder_min_beta > 0 && ladder_min_beta <= 1)) throw InvalidArgument("invalid temperature ladder");
  if (chains == 0) throw InvalidArgument("need at least one negative-phase chain");
}

namespace {

BinaryState random_state(std::size_t n, Rng& rng) {
  BinaryState s(n);
  for (auto& b : s) b = rng.bernoulli(0.5) ? 1 : 0;
  return s;
}

BoltzmannMachine initial_rbm(const RbmLayout& layout, Rng& rng) {
  BoltzmannMachine m(layout.n_units());
  for (std::size_t i = 0; i < layout.n_outer(); ++i) {
    for (std::size_t j = layout.hidden_begin(); j < layout.n_units(); ++j) m.set_weight(i, j, rng.normal(0.0, 0.01));
  }
  return m;
}

// Adds v_i * p_j, v and p into the gradient, scaled by `scale`, where p are
// the exact hidden conditional means given the visible block v.
void accumulate_statistics(const BoltzmannMachine& m, const RbmLayout& layout, std::span<const double> outer_values,
                           std::vector<double>& hidden_means, double scale, Gradient& g) {
  const auto& k = simd::kernels();
  const std::size_t outer = layout.n_outer();
  const std::size_t hb = layout.hidden_begin();
  for (std::size_t j = 0; j < layout.n_hidden; ++j) {
    hidden_means[j] = logistic(k.dot(m.row(hb + j).data(), outer_values.data(), outer) + m.bias(hb + j));
    g.biases[hb + j] += scale * hidden_means[j];
  }
  for (std::size_t i = 0; i < outer; ++i) {
    if (outer_values[i] == 0.0) continue;
    g.biases[i] += scale;
    k.axpy(scale, hidden_means.data(), g.weights.data() + i * layout.n_hidden, layout.n_hidden);
  }
}

Gradient zero_gradient(const RbmLayout& layout) {
  return Gradient{std::vector<double>(layout.n_outer() * layout.n_hidden, 0.0), std::vector<double>(layout.n_units(), 0.0)};
}

}  // namespace

CastTrainer::CastTrainer(const RbmLayout& layout, const TrainingSchedule& schedule, std::uint64_t seed)
    : layout_(layout), schedule_(schedule), rng_(seed) {
  schedule_.check();
  machine_ = initial_rbm(layout_, rng_);
  const auto ladder = TemperatureLadder::equidistant(schedule_.ladder_size, schedule_.ladder_min_beta);
  fixed_.reserve(schedule_.chains);
  tempered_.reserve(schedule_.chains);
  for (std::size_t c = 0; c < schedule_.chains; ++c) {
    fixed_.emplace_back(machine_, random_state(layout_.n_units(), rng_), &layout_);
    tempered_.emplace_back(machine_, random_state(layout_.n_units(), rng_), &layout_);
    tempered_state_.emplace_back(ladder, schedule_.gamma);
  }
}

Gradient CastTrainer::data_statistics(std::span<const BinaryState> batch) const {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  Gradient g = zero_gradient(layout_);
  std::vector<double> values(layout_.n_outer());
  std::vector<double> means(layout_.n_hidden);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    if (item.size() != layout_.n_outer()) throw DimensionError("training vector length differs from the visible block");
    for (std::size_t i = 0; i < item.size(); ++i) {
      if (item[i] > 1) throw InvalidArgument("training data must be binary");
      values[i] = item[i];
    }
    accumulate_statistics(machine_, layout_, values, means, scale, g);
  }
  return g;
}

Gradient CastTrainer::model_statistics() {
  Gradient g = zero_gradient(layout_);
  std::vector<double> values(layout_.n_outer());
  std::vector<double> means(layout_.n_hidden);
  const double scale = 1.0 / static_cast<double>(fixed_.size());
  for (std::size_t c = 0; c < fixed_.size(); ++c) {
    fixed_[c].sweep(rng_, 1.0);
    if (tempered_[c].ast_step(tempered_state_[c], rng_)) {
      // Both particles are at beta = 1, so the exchange is always accepted.
      fixed_[c].swap_state(tempered_[c]);
      ++swaps_;
    }
    const auto& s = fixed_[c].state();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = s[i];
    accumulate_statistics(machine_, layout_, values, means, scale, g);
  }
  return g;
}

Gradient CastTrainer::gradient(std::span<const BinaryState> batch) {
  Gradient g = data_statistics(batch);
  const Gradient model = model_statistics();
  for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] -= model.weights[i];
  for (std::size_t i = 0; i < g.biases.size(); ++i) g.biases[i] -= model.biases[i];
  return g;
}

void CastTrainer::apply(const Gradient& g, double learning_rate) {
  const std::size_t hb = layout_.hidden_begin();
  for (std::size_t i = 0; i < layout_.n_outer(); ++i) {
    for (std::size_t j = 0; j < layout_.n_hidden; ++j) {
      machine_.add_weight(i, hb + j, learning_rate * g.weights[i * layout_.n_hidden + j]);
    }
  }
  for (std::size_t i = 0; i < layout_.n_units(); ++i) machine_.add_bias(i, learning_rate * g.biases[i]);
}

void CastTrainer::init_visible_biases(std::span<const BinaryState> dataset) {
  if (dataset.empty()) throw InvalidArgument("empty training set");
  for (const auto& item : dataset)
    if (item.size() != layout_.n_outer()) throw DimensionError("training item size does not match the visible block");
  const double n = static_cast<double>(dataset.size());
  for (std::size_t i = 0; i < layout_.n_outer(); ++i) {
    double on = 0.0;
    for (const auto& item : dataset) on += item[i];
    machine_.set_bias(i, std::log((on + 1.0) / (n - on + 1.0)));
  }
}

void CastTrainer::update(std::span<const BinaryState> batch) {
  ++iteration_;
  const Gradient g = gradient(batch);
  apply(g, schedule_.learning_rate.at(static_cast<double>(iteration_)));
}

BoltzmannMachine cast_train(const RbmLayout& layout, std::span<const BinaryState> dataset,
                            const TrainingSchedule& schedule, Rng& rng, const TrainingProgress& progress) {
  schedule.check();
  if (dataset.empty()) throw InvalidArgument("empty training set");
  for (const auto& item : dataset) {
    if (item.size() != layout.n_outer()) throw DimensionError("training vector length differs from the visible block");
    for (auto b : item) {
      if (b > 1) throw InvalidArgument("training data must be binary");
    }
  }
  CastTrainer trainer(layout, schedule, rng.split());
  if (schedule.data_bias_init) trainer.init_visible_biases(dataset);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<BinaryState> batch;
  batch.reserve(schedule.batch_size);
  for (std::uint64_t t = 1; t <= schedule.iterations; ++t) {
    batch.clear();
    while (batch.size() < schedule.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    trainer.update(batch);
    if (progress) progress(t, trainer.machine());
  }
  return trainer.machine();
}

}  // namespace stpnet::sampling
