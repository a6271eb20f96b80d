#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "stpnet/error.hpp"
#include "stpnet/isl.hpp"
#include "stpnet/modes.hpp"
#include "stpnet/tsne.hpp"

using namespace stpnet;
using namespace stpnet::eval;

namespace {

std::vector<BinaryState> random_bits(Rng& rng, std::size_t count, std::size_t d, double p = 0.5) {
  std::vector<BinaryState> out(count, BinaryState(d));
  for (auto& v : out)
    for (auto& b : v) b = rng.bernoulli(p);
  return out;
}

// Direct product form: mean_y log( (1/N) sum_i prod_k beta^[x_ik = y_k] (1 - beta)^[x_ik != y_k] ).
long double isl_oracle(const std::vector<BinaryState>& test, const std::vector<BinaryState>& gen, long double beta) {
  long double total = 0.0L;
  for (const auto& y : test) {
    long double sum = 0.0L;
    for (const auto& x : gen) {
      long double prod = 1.0L;
      for (std::size_t k = 0; k < y.size(); ++k) prod *= x[k] == y[k] ? beta : 1.0L - beta;
      sum += prod;
    }
    total += std::log(sum / gen.size());
  }
  return total / test.size();
}

SampleTrace trace_of(const std::vector<BinaryState>& states) {
  SampleTrace t(states.front().size());
  for (std::size_t i = 0; i < states.size(); ++i) t.push(states[i], static_cast<double>(i + 1));
  return t;
}

}  // namespace

TEST_CASE("ISL closed forms") {
  Rng rng(1);
  const auto y = random_bits(rng, 1, 784);
  CHECK(std::abs(isl_log_likelihood(y, y) - 784 * std::log(0.95)) < 1e-9);

  const std::vector<BinaryState> zeros{BinaryState(10, 0)}, ones{BinaryState(10, 1)};
  CHECK(isl_log_likelihood(zeros, ones) == doctest::Approx(10 * std::log(0.05)).epsilon(1e-14));
  CHECK(std::isinf(isl_log_likelihood(zeros, ones, IslConfig{1.0})));
  CHECK(isl_log_likelihood(zeros, zeros, IslConfig{1.0}) == 0.0);
}

TEST_CASE("ISL equals the product-form oracle on random sets") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto test = random_bits(rng, 20, 20);
    const auto gen = random_bits(rng, 50, 20, rng.uniform(0.2, 0.8));
    const double beta = rng.uniform(0.55, 1.0);
    const auto oracle = isl_oracle(test, gen, beta);
    CHECK(std::abs(isl_log_likelihood(test, gen, IslConfig{beta}) - static_cast<double>(oracle)) < 1e-9);
  }
}

TEST_CASE("ISL is permutation invariant and rewards exact copies") {
  Rng rng(3);
  auto test = random_bits(rng, 15, 70);
  auto gen = random_bits(rng, 40, 70);
  const double base = isl_log_likelihood(test, gen);
  std::shuffle(test.begin(), test.end(), rng.engine());
  std::shuffle(gen.begin(), gen.end(), rng.engine());
  CHECK(isl_log_likelihood(test, gen) == doctest::Approx(base).epsilon(1e-12));

  const std::vector<BinaryState> one{test[0]};
  const double before = isl_log_likelihood(one, gen);
  gen.push_back(test[0]);
  CHECK(isl_log_likelihood(one, gen) >= before);
}

TEST_CASE("ISL curve matches prefix evaluations and validates checkpoints") {
  Rng rng(4);
  const auto test = random_bits(rng, 10, 100);
  const auto gen = random_bits(rng, 64, 100);
  const std::vector<std::size_t> checkpoints{1, 2, 10, 64};
  const auto curve = isl_curve(test, gen, checkpoints);
  REQUIRE(curve.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(curve[c].first == checkpoints[c]);
    const std::span<const BinaryState> prefix(gen.data(), checkpoints[c]);
    CHECK(curve[c].second == doctest::Approx(isl_log_likelihood(test, prefix)).epsilon(1e-12));
  }
  const std::vector<std::size_t> bad{2, 2};
  CHECK_THROWS_AS(isl_curve(test, gen, bad), InvalidArgument);
  const std::vector<std::size_t> beyond{65};
  CHECK_THROWS_AS(isl_curve(test, gen, beyond), InvalidArgument);
  CHECK_THROWS_AS(isl_log_likelihood(test, {}), InvalidArgument);
  CHECK_THROWS_AS(isl_log_likelihood(test, random_bits(rng, 3, 99)), DimensionError);
  CHECK_THROWS_AS(isl_log_likelihood(test, gen, IslConfig{0.5}), InvalidArgument);

  std::ostringstream csv;
  write_isl_csv(csv, curve);
  CHECK(csv.str().rfind("n_samples,isl\n1,", 0) == 0);
}

TEST_CASE("product-of-marginals baseline preserves pixel means") {
  Rng rng(5);
  std::vector<BinaryState> training;
  const std::vector<double> p{0.0, 0.1, 0.5, 0.9, 1.0};
  for (int i = 0; i < 1000; ++i) {
    BinaryState v(5);
    for (std::size_t k = 0; k < 5; ++k) v[k] = rng.bernoulli(p[k]);
    training.push_back(v);
  }
  std::vector<double> mean(5, 0.0);
  for (const auto& v : training)
    for (std::size_t k = 0; k < 5; ++k) mean[k] += v[k] / 1000.0;
  const std::size_t n = 100000;
  const auto samples = pom_baseline(training, n, rng);
  for (std::size_t k = 0; k < 5; ++k) {
    double got = 0;
    for (const auto& v : samples) got += v[k];
    got /= n;
    const double sigma = std::sqrt(std::max(0.0, mean[k] * (1 - mean[k])) / n);
    CHECK(std::abs(got - mean[k]) <= 3 * sigma + 1e-12);
  }
  const auto picks = opt_baseline(training, 50, rng);
  for (const auto& v : picks) CHECK(std::find(training.begin(), training.end(), v) != training.end());
}

TEST_CASE("mode traces from label activity and prototypes") {
  const sampling::RbmLayout layout{2, 1, 3};
  std::vector<BinaryState> states{
      {0, 0, 1, 0, 0, 0}, {0, 0, 1, 0, 0, 0}, {0, 0, 0, 1, 0, 0}, {0, 0, 0, 1, 0, 0}, {0, 0, 0, 1, 0, 0},
      {0, 0, 0, 0, 1, 0}, {0, 0, 0, 0, 0, 0}};
  const auto t = trace_of(states);
  const auto single = modes_from_labels(t, layout, 1);
  CHECK(single.modes == std::vector<int>{0, 0, 1, 1, 1, 2, 0});
  CHECK(single.switches() == 3);
  const auto windowed = modes_from_labels(t, layout, 3);
  // window 3: {0}, {0,0}, {0,0,1} -> 0, {0,1,1} -> 1, ...; ties go low
  CHECK(windowed.modes == std::vector<int>{0, 0, 0, 1, 1, 1, 1});
  CHECK_THROWS_AS(modes_from_labels(t, sampling::RbmLayout{5, 1, 0}, 1), InvalidArgument);

  SampleTrace with_invalid(6);
  with_invalid.push(states[0], 1);
  with_invalid.push(states[2], 2, false);
  with_invalid.push(states[5], 3);
  CHECK(modes_from_labels(with_invalid, layout, 1).modes == std::vector<int>{0, 2});

  const std::vector<std::vector<double>> protos{{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}};
  const auto vt = trace_of({{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}, {1, 1, 0, 1}});
  CHECK(modes_from_prototypes(vt, 4, protos, 1).modes == std::vector<int>{0, 1, 2, 0});

  const std::vector<BinaryState> images{{1, 0}, {1, 1}, {0, 1}};
  const std::vector<int> labels{0, 0, 1};
  const auto cp = class_prototypes(images, labels, 2);
  CHECK(cp[0] == std::vector<double>{1.0, 0.5});
  CHECK(cp[1] == std::vector<double>{0.0, 1.0});
}

TEST_CASE("dwell statistics") {
  ModeTrace m;
  const std::vector<int> seq{1, 1, 1, 0, 0, 2, 1, 1, 1, 1};
  for (std::size_t i = 0; i < seq.size(); ++i) m.push(static_cast<double>(i), seq[i]);
  const auto d = mode_dwell(m, 10.0);
  CHECK(d.run_lengths == std::vector<std::size_t>{3, 2, 1, 4});
  CHECK(d.run_modes == std::vector<int>{1, 0, 2, 1});
  CHECK(d.median_length() == 2.5);
  CHECK(d.occupancy(1) == doctest::Approx(0.7));
  CHECK(d.histogram() == std::map<std::size_t, std::size_t>{{1, 1}, {2, 1}, {3, 1}, {4, 1}});
  std::ostringstream csv;
  write_dwell_csv(csv, d);
  CHECK(csv.str() == "length_samples,duration,count\n1,10,1\n2,20,1\n3,30,1\n4,40,1\n");
  CHECK_THROWS_AS(m.push(0.0, 1), InvalidArgument);
}

TEST_CASE("mean interaction strength") {
  Rng rng(6);
  const auto m = BoltzmannMachine::random(6, rng, 1.0, 1.0);
  const std::vector<std::vector<double>> acts{{1, 0, 0.5, 0, 0, 1}, {0, 1, 0, 0.25, 1, 0}};
  const auto w = mean_interaction_strength(m, acts);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double expected = 0;
      for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b) expected += acts[i][a] * m.weight(a, b) * acts[j][b];
      CHECK(w[i][j] == doctest::Approx(expected).epsilon(1e-12));
    }
  CHECK(w[0][1] == doctest::Approx(w[1][0]).epsilon(1e-12));
  const auto zero = mean_interaction_strength(BoltzmannMachine(6), acts);
  for (const auto& row : zero)
    for (double x : row) CHECK(x == 0.0);
}

TEST_CASE("classification picks the label wired to the image") {
  const sampling::RbmLayout layout{4, 2, 2};
  BoltzmannMachine m(layout.n_units());
  // hidden 6 detects pixels 0,1 and drives label 4; hidden 7 detects 2,3 and drives label 5
  const std::size_t h0 = layout.hidden_begin(), h1 = h0 + 1;
  for (std::size_t v : {0u, 1u}) m.set_weight(v, h0, 4.0);
  for (std::size_t v : {2u, 3u}) m.set_weight(v, h1, 4.0);
  m.set_weight(4, h0, 4.0);
  m.set_weight(5, h1, 4.0);
  for (std::size_t u : {h0, h1}) m.set_bias(u, -4.0);
  m.set_bias(4, -2.0);
  m.set_bias(5, -2.0);
  Rng rng(7);
  CHECK(classify_gibbs(m, layout, {1, 1, 0, 0}, rng) == 0);
  CHECK(classify_gibbs(m, layout, {0, 0, 1, 1}, rng) == 1);
  CHECK_THROWS_AS(classify_gibbs(m, sampling::RbmLayout{6, 2, 0}, BinaryState(6, 0), rng), InvalidArgument);
  CHECK_THROWS_AS(classify_gibbs(m, layout, {1, 1, 0}, rng), DimensionError);
  CHECK(mean_activity(trace_of({{1, 0}, {1, 1}})) == std::vector<double>{1.0, 0.5});
}

TEST_CASE("tSNE affinities: symmetry, normalization and perplexity") {
  Rng rng(8);
  std::vector<std::vector<double>> x(40, std::vector<double>(5));
  for (auto& v : x)
    for (auto& c : v) c = rng.normal(0, 1);
  const auto p = tsne_affinities(x, 10.0);
  double total = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(p[i * 40 + i] == 0.0);
    for (std::size_t j = 0; j < 40; ++j) {
      CHECK(p[i * 40 + j] == p[j * 40 + i]);
      total += p[i * 40 + j];
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<std::vector<double>> two{{0.0}, {1.0}};
  const auto p2 = tsne_affinities(two, 0.9);
  CHECK(p2[1] == p2[2]);
  const std::vector<std::vector<double>> same(5, std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(tsne_affinities(same, 2.0), InvalidArgument);
}

TEST_CASE("tSNE gradient matches central finite differences") {
  Rng rng(9);
  std::vector<std::vector<double>> x(10, std::vector<double>(4));
  for (auto& v : x)
    for (auto& c : v) c = rng.normal(0, 1);
  const auto p = tsne_affinities(x, 3.0);
  std::vector<Point2> y(10);
  for (auto& pt : y) pt = {rng.normal(0, 1), rng.normal(0, 1)};
  const auto grad = tsne_gradient(p, y);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 10; ++i) {
    for (int c = 0; c < 2; ++c) {
      auto plus = y, minus = y;
      plus[i][c] += h;
      minus[i][c] -= h;
      const double fd = (tsne_cost(p, plus) - tsne_cost(p, minus)) / (2 * h);
      CHECK(std::abs(grad[i][c] - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3));
    }
  }
}

TEST_CASE("tSNE separates Gaussian clusters and its cost settles") {
  Rng rng(10);
  std::vector<std::vector<double>> x;
  std::vector<int> cluster;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> centre(20);
    for (auto& v : centre) v = rng.normal(0, 10);
    for (int i = 0; i < 30; ++i) {
      std::vector<double> pt(20);
      for (std::size_t k = 0; k < 20; ++k) pt[k] = centre[k] + rng.normal(0, 1);
      x.push_back(pt);
      cluster.push_back(c);
    }
  }
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 500;
  const auto r = tsne_embed(x, cfg, rng);
  double within = 0, between = 0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double d = std::hypot(r.points[i][0] - r.points[j][0], r.points[i][1] - r.points[j][1]);
      if (cluster[i] == cluster[j]) {
        within += d;
        ++nw;
      } else {
        between += d;
        ++nb;
      }
    }
  CHECK(within / nw < between / nb);
  CHECK(r.cost >= 0.0);
  for (std::size_t start = 100; start + 50 <= r.cost_history.size(); start += 50) {
    const double first = r.cost_history[start];
    const double last = r.cost_history[start + 49];
    CHECK(last <= first * (1 + 1e-9));
    for (std::size_t k = start; k < start + 50; ++k) CHECK(r.cost_history[k] <= first * 1.05);
  }
  TsneConfig big = cfg;
  big.perplexity = 40;
  CHECK_THROWS_AS(tsne_embed(x, big, rng), InvalidArgument);

  std::ostringstream csv;
  write_tsne_csv(csv, r.points, cluster);
  CHECK(csv.str().rfind("x,y,mode\n", 0) == 0);
}
