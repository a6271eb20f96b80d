#include <array>
#include <cmath>

#include "doctest.h"
#include "stpnet/error.hpp"
#include "stpnet/samplers.hpp"

using namespace stpnet;
using namespace stpnet::sampling;

namespace {

// Transition matrix of one ascending-order sweep, built from the exact
// single-site conditionals.
std::vector<std::vector<double>> sweep_kernel(const BoltzmannMachine& m) {
  const std::size_t n = m.size();
  const std::size_t count = std::size_t{1} << n;
  std::vector<std::vector<double>> total(count, std::vector<double>(count, 0.0));
  for (std::size_t s = 0; s < count; ++s) total[s][s] = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::vector<double>> site(count, std::vector<double>(count, 0.0));
    for (std::size_t s = 0; s < count; ++s) {
      const double p1 = conditional_on(m, state_from_index(s, n), k);
      site[s][s | (std::size_t{1} << k)] += p1;
      site[s][s & ~(std::size_t{1} << k)] += 1.0 - p1;
    }
    std::vector<std::vector<double>> next(count, std::vector<double>(count, 0.0));
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t b = 0; b < count; ++b)
        for (std::size_t c = 0; c < count; ++c) next[a][c] += total[a][b] * site[b][c];
    total = std::move(next);
  }
  return total;
}

}  // namespace

TEST_CASE("gibbs_sweep on a null machine produces fair coins") {
  BoltzmannMachine m(3);
  Rng rng(1);
  BinaryState z(3, 0);
  std::array<double, 3> ones{};
  const int sweeps = 100000;
  for (int s = 0; s < sweeps; ++s) {
    z = gibbs_sweep(m, z, 1.0, rng);
    for (int i = 0; i < 3; ++i) ones[i] += z[i];
  }
  const double sigma = std::sqrt(0.25 / sweeps);
  for (double c : ones) CHECK(std::abs(c / sweeps - 0.5) < 3 * sigma);
}

TEST_CASE("single-site sweep kernel has the Boltzmann distribution as its fixed point") {
  Rng rng(2);
  const auto m = BoltzmannMachine::random(3, rng, 1.5, 1.5);
  const auto kernel = sweep_kernel(m);
  const auto target = exact_distribution(m);
  std::vector<double> pi(8, 1.0 / 8);
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> next(8, 0.0);
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t b = 0; b < 8; ++b) next[b] += pi[a] * kernel[a][b];
    pi = next;
  }
  for (std::size_t s = 0; s < 8; ++s) CHECK(std::abs(pi[s] - target.probs[s]) < 1e-8);
}

TEST_CASE("gibbs_sweep one-step transitions follow the sweep kernel") {
  Rng rng(3);
  const auto m = BoltzmannMachine::random(3, rng, 1.5, 1.5);
  const auto kernel = sweep_kernel(m);
  const BinaryState start{1, 0, 1};
  const std::size_t row = state_index(start);
  std::vector<double> counts(8, 0.0);
  const int draws = 200000;
  for (int d = 0; d < draws; ++d) counts[state_index(gibbs_sweep(m, start, 1.0, rng))] += 1;
  for (std::size_t s = 0; s < 8; ++s) {
    const double p = kernel[row][s];
    CHECK(std::abs(counts[s] / draws - p) <= 4 * std::sqrt(p * (1 - p) / draws) + 1e-12);
  }
}

TEST_CASE("gibbs chain on a random 4-unit machine converges in KL") {
  Rng rng(4);
  const auto m = BoltzmannMachine::random(4, rng, 0.6, 0.6);
  const auto trace = run_gibbs(m, BinaryState(4, 0), 1000000, rng);
  CHECK(kl_divergence(empirical_distribution(trace, 4), exact_distribution(m)) < 1e-3);
}

TEST_CASE("samplers are reproducible from the seed") {
  Rng seed_rng(5);
  const auto m = BoltzmannMachine::random(6, seed_rng, 1.0, 1.0);
  Rng a(42), b(42);
  CHECK(run_gibbs(m, BinaryState(6, 0), 500, a) == run_gibbs(m, BinaryState(6, 0), 500, b));
  AstState sa(TemperatureLadder::equidistant(5, 0.8)), sb(TemperatureLadder::equidistant(5, 0.8));
  CHECK(run_ast(m, BinaryState(6, 0), sa, 500, a) == run_ast(m, BinaryState(6, 0), sb, 500, b));
  CHECK(sa.log_weights == sb.log_weights);
}

TEST_CASE("block sweep samples the RBM distribution") {
  const RbmLayout layout{3, 2, 1};
  Rng rng(6);
  const auto m = random_rbm(layout, rng, 1.0, 1.0);
  const auto trace = run_gibbs(m, BinaryState(6, 0), 400000, rng, &layout);
  CHECK(kl_divergence(empirical_distribution(trace, 6), exact_distribution(m)) < 2e-3);

  BoltzmannMachine dense = m;
  dense.set_weight(0, 1, 0.5);
  CHECK_THROWS_AS(block_gibbs_sweep(dense, layout, BinaryState(6, 0), rng), InvalidArgument);
  CHECK_THROWS_AS(block_gibbs_sweep(m, RbmLayout{3, 3, 1}, BinaryState(7, 0), rng), DimensionError);
}

TEST_CASE("temperature ladder validation") {
  const auto l = TemperatureLadder::equidistant(20, 0.9);
  CHECK(l.size() == 20);
  CHECK(l.beta(0) == 1.0);
  CHECK(l.beta(19) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_THROWS_AS(TemperatureLadder({0.9, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(TemperatureLadder({1.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(TemperatureLadder(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("single-level tempering is a Gibbs sweep with deterministic weight growth") {
  Rng seed_rng(7);
  const auto m = BoltzmannMachine::random(5, seed_rng, 1.0, 1.0);
  AstState ast(TemperatureLadder({1.0}));
  BinaryState z(5, 0);
  double expected_log_g = 0.0;
  for (int t = 1; t <= 200; ++t) {
    Rng r1(100 + t), r2(100 + t);
    auto [next, next_ast] = ast_step(m, z, ast, r1);
    CHECK(next == gibbs_sweep(m, z, 1.0, r2));
    expected_log_g += std::log1p(90.0 / (150.0 + t));
    CHECK(next_ast.log_weights[0] == doctest::Approx(expected_log_g).epsilon(1e-13));
    CHECK(next_ast.index == 0);
    z = next;
    ast = next_ast;
  }
}

TEST_CASE("without adaptation, equal-probability moves are always accepted") {
  BoltzmannMachine null_machine(4);  // E = 0, so only the weights enter the ratio
  AstState ast(TemperatureLadder::equidistant(6, 0.5), RateSchedule{0.0, 1.0});
  Rng rng(8);
  BinaryState z(4, 0);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t before = ast.index;
    auto [next, next_ast] = ast_step(null_machine, z, ast, rng);
    const long moved = static_cast<long>(next_ast.index) - static_cast<long>(before);
    CHECK(std::abs(moved) <= 1);
    if (before > 0 && before + 1 < 6) CHECK(std::abs(moved) == 1);
    CHECK(next_ast.log_weights == std::vector<double>(6, 0.0));
    z = next;
    ast = next_ast;
  }
}

TEST_CASE("adaptive tempering visits all levels and samples the beta = 1 distribution") {
  Rng rng(9);
  const auto m = BoltzmannMachine::random(4, rng, 0.6, 0.6);
  AstState ast(TemperatureLadder::equidistant(20, 0.9));
  std::vector<std::size_t> visits;
  auto trace = run_ast(m, BinaryState(4, 0), ast, 100000, rng, nullptr, &visits);
  for (std::size_t v : visits) {
    const double frac = static_cast<double>(v) / 100000.0;
    CHECK(frac >= 0.5 / 20);
    CHECK(frac <= 2.0 / 20);
  }
  AstState long_ast(TemperatureLadder::equidistant(20, 0.9));
  trace = run_ast(m, BinaryState(4, 0), long_ast, 1000000, rng);
  CHECK(kl_divergence(empirical_distribution(trace, 4), exact_distribution(m)) < 5e-3);
  const double rate = ast_effective_rate(trace);
  CHECK(rate == doctest::Approx(static_cast<double>(trace.valid_count()) / trace.size()));
  CHECK(rate > 0.02);
  CHECK(rate < 0.1);
}

TEST_CASE("model phase at zero parameters averages to quarter products") {
  const RbmLayout layout{3, 2, 0};
  TrainingSchedule schedule;
  schedule.ladder_size = 4;
  CastTrainer trainer(layout, schedule, 10);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 3; j < 5; ++j) trainer.machine().set_weight(i, j, 0.0);

  const std::vector<BinaryState> batch{{1, 0, 1}, {1, 1, 0}};
  const auto data = trainer.data_statistics(batch);
  const int draws = 100000;
  std::vector<double> mean(6, 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto g = trainer.model_statistics();
    for (std::size_t k = 0; k < 6; ++k) mean[k] += g.weights[k] / draws;
  }
  // v_i * sigma(0) with v_i ~ Bernoulli(1/2): mean 1/4, sd 1/4 per draw
  const double tol = 3 * 0.25 / std::sqrt(draws);
  for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(mean[k] - 0.25) < tol);
  // data side: <v_i> * 1/2 at zero weights
  CHECK(data.weights[0] == doctest::Approx(0.5));
  CHECK(data.weights[2] == doctest::Approx(0.25));
  CHECK(data.weights[4] == doctest::Approx(0.25));
}

TEST_CASE("training on a single pattern puts the visible mode on it") {
  const RbmLayout layout{4, 2, 0};
  const std::vector<BinaryState> data{{1, 0, 1, 1}};
  TrainingSchedule schedule;
  schedule.iterations = 3000;
  schedule.batch_size = 1;
  schedule.learning_rate = {100.0, 2000.0};
  schedule.ladder_size = 5;
  Rng rng(11);
  const auto m = cast_train(layout, data, schedule, rng);
  const auto visible = marginal_over(exact_distribution(m), std::vector<std::size_t>{0, 1, 2, 3});
  const auto mode = std::max_element(visible.probs.begin(), visible.probs.end()) - visible.probs.begin();
  CHECK(mode == static_cast<long>(state_index(data[0])));
}

TEST_CASE("training rejects malformed data") {
  const RbmLayout layout{2, 1, 0};
  TrainingSchedule schedule;
  Rng rng(12);
  CHECK_THROWS_AS(cast_train(layout, std::vector<BinaryState>{{1, 0, 1}}, schedule, rng), DimensionError);
  CHECK_THROWS_AS(cast_train(layout, std::vector<BinaryState>{{1, 2}}, schedule, rng), InvalidArgument);
}

TEST_CASE("visible biases start at smoothed data log-odds") {
  const RbmLayout layout{3, 2, 1};
  TrainingSchedule schedule;
  schedule.ladder_size = 3;
  CastTrainer trainer(layout, schedule, 13);
  const std::vector<BinaryState> data{{1, 0, 0, 1}, {1, 1, 0, 0}, {1, 0, 0, 1}};
  const double hidden_before = trainer.machine().bias(layout.hidden_begin());
  trainer.init_visible_biases(data);
  // c on out of n = 3 items: log((c + 1) / (3 - c + 1))
  CHECK(trainer.machine().bias(0) == doctest::Approx(std::log(4.0 / 1.0)));
  CHECK(trainer.machine().bias(1) == doctest::Approx(std::log(2.0 / 3.0)));
  CHECK(trainer.machine().bias(2) == doctest::Approx(std::log(1.0 / 4.0)));
  CHECK(trainer.machine().bias(3) == doctest::Approx(std::log(3.0 / 2.0)));
  CHECK(trainer.machine().bias(layout.hidden_begin()) == hidden_before);
  CHECK_THROWS_AS(trainer.init_visible_biases(std::vector<BinaryState>{{1, 0}}), DimensionError);
}

TEST_CASE("random_rbm has no within-block weights") {
  const RbmLayout layout{3, 2, 1};
  Rng rng(14);
  const auto m = random_rbm(layout, rng, 0.6, 0.3);
  CHECK_NOTHROW(layout.check(m));
  for (std::size_t i = 0; i < layout.n_units(); ++i) CHECK(std::abs(m.bias(i)) <= 0.3);
  CHECK(std::abs(m.weight(0, layout.hidden_begin())) > 0.0);
}
