#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "stpnet/error.hpp"
#include "stpnet/lif.hpp"
#include "stpnet/simd/kernels.hpp"

using namespace stpnet;
using namespace stpnet::lif;

namespace {

// Heun integration of dR/dt = (1 - R)/tau_rec, dU/dt = -U/tau_fac with the
// spike jumps applied at the spike times. Returns the efficacies.
struct OdeResult {
  std::vector<double> efficacy;
  double r, u;
};

OdeResult stp_ode_oracle(const StpParams& p, const std::vector<double>& spike_times, double h) {
  double r = 1.0, u = 0.0, t = 0.0;
  auto deriv = [&](double rr, double uu) {
    return std::pair{p.tau_rec > 0 ? (1.0 - rr) / p.tau_rec : 0.0, p.tau_fac > 0 ? -uu / p.tau_fac : 0.0};
  };
  OdeResult out;
  for (double ts : spike_times) {
    while (t < ts) {
      const double step = std::min(h, ts - t);
      const auto [dr1, du1] = deriv(r, u);
      const auto [dr2, du2] = deriv(r + step * dr1, u + step * du1);
      r += 0.5 * step * (dr1 + dr2);
      u += 0.5 * step * (du1 + du2);
      t += step;
    }
    if (p.tau_rec == 0) r = 1.0;
    if (p.tau_fac == 0) u = 0.0;
    u += p.u0 * (1.0 - u);
    out.efficacy.push_back(u * r);
    r -= u * r;
  }
  out.r = r;
  out.u = u;
  return out;
}

std::vector<double> closed_form_efficacies(const StpParams& p, const std::vector<double>& spike_times,
                                           SynapseState* final_state = nullptr) {
  SynapseState s;
  std::vector<double> eff;
  for (double ts : spike_times) {
    s = stp_advance(s, p, ts - s.last_update);
    auto [next, e] = stp_on_spike(s, p);
    s = next;
    eff.push_back(e);
  }
  if (final_state) *final_state = s;
  return eff;
}

LifNetworkConfig lone_neuron(double e_leak, NoiseConfig noise = {}) {
  LifNetworkConfig c;
  c.n = 1;
  c.e_leak = {e_leak};
  c.weights = {0.0};
  c.noise = noise;
  return c;
}

const Calibration& default_calibration() {
  static const Calibration cal = [] {
    Rng rng(2024);
    CalibrationOptions options;
    options.duration = 50000.0;
    return calibrate(LifParams::cuba_defaults(), NoiseConfig::cuba_defaults(), rng, options);
  }();
  return cal;
}

}  // namespace

TEST_CASE("stp_advance: closed-form relaxation") {
  const StpParams p{0.5, 15.0, 20.0};
  const SynapseState s{0.0, 0.4, 3.0};
  const auto same = stp_advance(s, p, 0.0);
  CHECK(same.r == s.r);
  CHECK(same.u == s.u);
  CHECK(same.last_update == s.last_update);

  const auto later = stp_advance(s, p, 15.0);
  CHECK(later.r == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(later.u == doctest::Approx(0.4 * std::exp(-0.75)).epsilon(1e-14));
  CHECK(later.last_update == 18.0);

  const auto instant = stp_advance(s, StpParams::static_synapse(), 0.1);
  CHECK(instant.r == 1.0);
  CHECK(instant.u == 0.0);
  CHECK_THROWS_AS(stp_advance(s, p, -1.0), InvalidArgument);
}

TEST_CASE("stp_on_spike: static, renewing and weakly depressing synapses") {
  Rng rng(1);
  std::vector<double> times;
  double t = 0;
  for (int i = 0; i < 50; ++i) times.push_back(t += rng.exponential(0.2));
  for (double e : closed_form_efficacies(StpParams::static_synapse(), times)) CHECK(e == 1.0);

  const auto renewing = closed_form_efficacies(StpParams::renewing(10.0), {5.0, 15.0});
  CHECK(renewing[0] == 1.0);
  CHECK(renewing[1] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));

  std::vector<double> burst;
  for (int i = 0; i < 10; ++i) burst.push_back(10.0 * i);
  const auto weak = closed_form_efficacies(StpParams{0.01, 280.0, 0.0}, burst);
  for (std::size_t i = 1; i < weak.size(); ++i) {
    CHECK(weak[i] < weak[i - 1]);
    CHECK(weak[i] / weak[i - 1] > 0.97);
  }
}

TEST_CASE("stp closed form matches a fine-step ODE integration on random spike trains") {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    StpParams p;
    p.u0 = rng.uniform(0.01, 1.0);
    p.tau_rec = rng.bernoulli(0.1) ? 0.0 : rng.uniform(1.0, 500.0);
    p.tau_fac = rng.bernoulli(0.3) ? 0.0 : rng.uniform(1.0, 500.0);
    std::vector<double> times;
    double t = 0;
    const auto count = 2 + rng.below(9);
    for (std::uint64_t i = 0; i < count; ++i) times.push_back(t += rng.exponential(0.15));
    SynapseState closed;
    const auto eff = closed_form_efficacies(p, times, &closed);
    const auto oracle = stp_ode_oracle(p, times, 1e-3);
    for (std::size_t i = 0; i < eff.size(); ++i) worst = std::max(worst, std::abs(eff[i] - oracle.efficacy[i]));
    worst = std::max({worst, std::abs(closed.r - oracle.r), std::abs(closed.u - oracle.u)});
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("synapse state stays in the unit square for any spike sequence") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const StpParams p{rng.bernoulli(0.2) ? (rng.bernoulli(0.5) ? 0.0 : 1.0) : rng.uniform(),
                      rng.bernoulli(0.2) ? 0.0 : rng.exponential(0.01), rng.bernoulli(0.2) ? 0.0 : rng.exponential(0.01)};
    SynapseState s;
    for (int k = 0; k < 40; ++k) {
      s = stp_advance(s, p, rng.bernoulli(0.2) ? 0.0 : rng.exponential(0.1));
      REQUIRE(s.r >= 0.0);
      REQUIRE(s.r <= 1.0);
      REQUIRE(s.u >= 0.0);
      REQUIRE(s.u <= 1.0);
      auto [next, e] = stp_on_spike(s, p);
      s = next;
      REQUIRE(e >= 0.0);
      REQUIRE(e <= 1.0);
      REQUIRE(s.r >= 0.0);
      REQUIRE(s.u <= 1.0);
    }
  }
}

TEST_CASE("renewing synapse keeps the summed synaptic drive bounded during a burst") {
  auto running_max = [](const StpParams& p, int spikes) {
    // Synaptic current in units of the weight, as integrated by the simulator.
    const double tau_syn = 10.0, interval = 10.0;
    SynapseState s;
    double current = 0.0, peak = 0.0;
    for (int i = 0; i < spikes; ++i) {
      if (i > 0) current *= std::exp(-interval / tau_syn);
      s = stp_advance(s, p, i == 0 ? 0.0 : interval);
      auto [next, e] = stp_on_spike(s, p);
      s = next;
      current += e / p.u0;
      peak = std::max(peak, current);
    }
    return peak;
  };
  CHECK(running_max(StpParams::renewing(10.0), 50) < 1.0 + 1e-12);
  const double static_peak = running_max(StpParams::static_synapse(), 50);
  CHECK(static_peak == doctest::Approx(1.0 / (1.0 - std::exp(-1.0))).epsilon(1e-9));
}

TEST_CASE("extract_states: half-open refractory windows") {
  const std::vector<double> times{95.0, 100.0, 105.0, 109.999, 110.0};
  const std::vector<Spike> spikes{{0, 100.0}};
  const auto trace = extract_states(spikes, 2, 10.0, times);
  CHECK(trace.state(0) == BinaryState{0, 0});
  CHECK(trace.state(1) == BinaryState{1, 0});
  CHECK(trace.state(2) == BinaryState{1, 0});
  CHECK(trace.state(3) == BinaryState{1, 0});
  CHECK(trace.state(4) == BinaryState{0, 0});
  CHECK(extract_states({}, 3, 10.0, times).valid_count() == times.size());

  const std::vector<double> unsorted{2.0, 1.0};
  CHECK_THROWS_AS(extract_states(spikes, 2, 10.0, unsorted), InvalidArgument);
  CHECK_THROWS_AS(extract_states(spikes, 0, 10.0, times), InvalidArgument);
}

TEST_CASE("extract_states agrees with a per-query interval scan") {
  Rng rng(4);
  const std::size_t n = 4;
  std::vector<Spike> spikes;
  for (int i = 0; i < 300; ++i) spikes.push_back({static_cast<std::uint32_t>(rng.below(n)), rng.uniform(0, 1000)});
  std::vector<double> samples;
  for (int i = 0; i < 2000; ++i) samples.push_back(rng.uniform(0, 1000));
  std::sort(samples.begin(), samples.end());
  const auto trace = extract_states(spikes, n, 10.0, samples);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      bool on = false;
      for (const auto& sp : spikes) on |= sp.neuron == k && sp.time <= samples[s] && samples[s] < sp.time + 10.0;
      REQUIRE(trace.state(s)[k] == on);
    }
  }
}

TEST_CASE("simulate: a quiet neuron relaxes to its leak potential") {
  auto c = lone_neuron(-60.0, NoiseConfig{0, 0, 0, 0});
  Rng rng(5);
  const auto result = simulate(c, 100.0, rng, {true, std::size_t{0}});
  CHECK(result.spikes.empty());
  CHECK(result.probe_trace.size() == 1000);
  CHECK(result.probe_trace.back() == doctest::Approx(-60.0).epsilon(1e-12));
  CHECK(result.trace.size() == 100);
  for (std::size_t i = 0; i < result.trace.size(); ++i) CHECK(result.trace.state(i) == BinaryState{0});
}

TEST_CASE("simulate: records states from integer refractory windows") {
  Rng seed_rng(6);
  const auto m = BoltzmannMachine::random(4, seed_rng, 1.0, 1.0);
  auto c = translate(m, default_calibration(), LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  Rng rng(7);
  const auto result = simulate(c, 2000.0, rng);
  REQUIRE(!result.spikes.empty());
  const auto window = static_cast<long>(std::lround(c.neuron.tau_ref / c.dt));
  for (std::size_t s = 0; s < result.trace.size(); ++s) {
    const long sample_step = std::lround(result.trace.timestamp(s) / c.dt);
    for (std::size_t k = 0; k < 4; ++k) {
      bool on = false;
      for (const auto& sp : result.spikes) {
        const long spike_step = std::lround(sp.time / c.dt);
        on |= sp.neuron == k && spike_step <= sample_step && sample_step < spike_step + window;
      }
      REQUIRE(result.trace.state(s)[k] == on);
    }
  }
  // Refractoriness: no neuron fires twice within tau_ref.
  std::vector<double> last(4, -1e9);
  for (const auto& sp : result.spikes) {
    CHECK(sp.time - last[sp.neuron] >= c.neuron.tau_ref - 1e-9);
    last[sp.neuron] = sp.time;
  }
}

TEST_CASE("simulate: determinism and static-limit equivalence") {
  Rng seed_rng(8);
  const auto m = BoltzmannMachine::random(6, seed_rng, 1.0, 1.0);
  auto c = translate(m, default_calibration(), LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  c.set_stp(StpParams::static_synapse());
  Rng a(9), b(9), d(10);
  const auto first = simulate(c, 3000.0, a);
  SimulationOptions no_stp;
  no_stp.stp_enabled = false;
  const auto disabled = simulate(c, 3000.0, b, no_stp);
  CHECK(first.spikes == disabled.spikes);
  CHECK(first.trace == disabled.trace);
  CHECK(simulate(c, 3000.0, d).spikes != first.spikes);

  c.set_stp(StpParams::renewing(10.0));
  Rng e(9), f(9);
  const auto renewing = simulate(c, 3000.0, e);
  CHECK(renewing.spikes == simulate(c, 3000.0, f).spikes);
  CHECK(renewing.spikes != first.spikes);
}

TEST_CASE("simulate: scalar and vector kernels give identical spike trains") {
  if (!simd::isa_available(simd::Isa::Avx2)) return;
  Rng seed_rng(11);
  const auto m = BoltzmannMachine::random(13, seed_rng, 1.0, 1.0);
  auto c = translate(m, default_calibration(), LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  c.set_stp(StpParams::renewing(10.0));
  const auto before = simd::active_isa();
  simd::set_active_isa(simd::Isa::Scalar);
  Rng a(12);
  const auto scalar = simulate(c, 2000.0, a);
  simd::set_active_isa(simd::Isa::Avx2);
  Rng b(12);
  const auto vector = simulate(c, 2000.0, b);
  simd::set_active_isa(before);
  CHECK(scalar.spikes == vector.spikes);
}

TEST_CASE("calibration fits a logistic activation") {
  const auto& cal = default_calibration();
  CHECK(cal.alpha > 0);
  CHECK(cal.residual_rms < 0.02);
  CHECK(cal.leak_grid.size() >= 15);
  CHECK(*std::min_element(cal.activation.begin(), cal.activation.end()) < 0.05);
  CHECK(*std::max_element(cal.activation.begin(), cal.activation.end()) > 0.95);
  CHECK(cal.predict(cal.midpoint) == doctest::Approx(0.5));
  CHECK(cal.beta_shift() == doctest::Approx(cal.alpha * cal.midpoint));

  Rng rng(13);
  CHECK_THROWS_AS(calibrate(LifParams::cuba_defaults(), NoiseConfig{0, 0, 1, 1}, rng), InvalidArgument);
  CalibrationOptions strict;
  strict.duration = 2000.0;
  strict.max_residual = 1e-6;
  CHECK_THROWS_AS(calibrate(LifParams::cuba_defaults(), NoiseConfig::cuba_defaults(), rng, strict), FitError);
}

TEST_CASE("a neuron translated to p = 1/2 fires at 0.5 / tau_ref") {
  const auto& cal = default_calibration();
  auto c = translate(BoltzmannMachine(1), cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  CHECK(c.e_leak[0] == cal.midpoint);
  Rng rng(14);
  const double block = 10000.0;
  const int blocks = 10;
  const auto result = simulate(c, block * blocks, rng);
  std::vector<double> rate(blocks, 0.0);
  for (const auto& s : result.spikes) rate[std::min(blocks - 1, static_cast<int>(s.time / block))] += 1000.0 / block;
  const double mean = std::accumulate(rate.begin(), rate.end(), 0.0) / blocks;
  double var = 0;
  for (double r : rate) var += (r - mean) * (r - mean) / (blocks - 1);
  const double sigma = std::sqrt(var / blocks);
  MESSAGE("rate " << mean << " Hz, sigma " << sigma);
  CHECK(std::abs(mean - 50.0) < 3 * sigma + 1.0);
}

TEST_CASE("translate: zero parameters, leak shift and the PSP-average factor") {
  const auto& cal = default_calibration();
  BoltzmannMachine m(3);
  m.set_weight(0, 1, 0.5);
  m.set_weight(1, 2, -0.3);
  m.set_bias(2, 1.2);
  const auto c = translate(m, cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  CHECK(c.weights[0 * 3 + 2] == 0.0);
  CHECK(c.weights[0 * 3 + 1] > 0.0);
  CHECK(c.weights[1 * 3 + 2] < 0.0);
  CHECK(c.weights[0 * 3 + 1] == c.weights[1 * 3 + 0]);
  CHECK(c.e_leak[0] == cal.midpoint);
  CHECK(c.e_leak[2] == doctest::Approx(cal.midpoint + 1.2 / cal.alpha).epsilon(1e-14));
  CHECK(c.check().empty());

  // Mean PSP over tau_syn from a unit-peak exponential current into a unit
  // capacitance, integrated numerically.
  for (auto [tau_syn, tau_eff] : {std::pair{10.0, 0.1}, {10.0, 3.0}, {10.0, 25.0}, {10.0, 10.0}}) {
    const int steps = 200000;
    const double h = tau_syn / steps;
    double u = 0, sum = 0;
    for (int i = 0; i < steps; ++i) {
      const double t = (i + 0.5) * h;
      // exact solution of du/dt = -u/tau_eff + exp(-t/tau_syn), u(0) = 0
      u = tau_syn == tau_eff ? t * std::exp(-t / tau_syn)
                             : (std::exp(-t / tau_syn) - std::exp(-t / tau_eff)) / (1 / tau_eff - 1 / tau_syn);
      sum += u * h;
    }
    CHECK(psp_average_factor(tau_syn, tau_eff) == doctest::Approx(sum / tau_syn).epsilon(1e-8));
  }
  CHECK(psp_average_factor(10.0, 10.0 * (1 + 1e-7)) == doctest::Approx(psp_average_factor(10.0, 10.0)).epsilon(1e-6));
}

TEST_CASE("translated units reproduce their isolated activation") {
  const auto& cal = default_calibration();
  Rng rng(15);
  const auto m = BoltzmannMachine::random(5, rng, 0.6, 0.6);
  auto c = translate(m, cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  c.set_stp(StpParams::renewing(10.0));
  std::fill(c.weights.begin(), c.weights.end(), 0.0);
  const auto result = simulate(c, 200000.0, rng);
  for (std::size_t k = 0; k < 5; ++k) {
    double on = 0;
    for (std::size_t s = 0; s < result.trace.size(); ++s) on += result.trace.state(s)[k];
    CHECK(std::abs(on / result.trace.size() - logistic(m.bias(k))) < 0.02);
  }
}

TEST_CASE("a small translated network samples its target") {
  const auto& cal = default_calibration();
  Rng rng(16);
  const auto m = BoltzmannMachine::random(4, rng, 0.6, 0.6);
  auto c = translate(m, cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  c.set_stp(StpParams::renewing(10.0));
  const auto result = simulate(c, 300000.0, rng, {true, std::nullopt, 100.0});
  CHECK(kl_divergence(empirical_distribution(result.trace, 4), exact_distribution(m)) < 0.05);
}

TEST_CASE("conductance-based model calibrates and samples") {
  Rng rng(17);
  const auto neuron = LifParams::coba_defaults();
  const auto noise = NoiseConfig::coba_defaults();
  CalibrationOptions options;
  options.duration = 10000.0;
  const auto cal = calibrate(neuron, noise, rng, options);
  CHECK(cal.residual_rms < 0.02);
  const auto m = BoltzmannMachine::random(4, rng, 0.6, 0.6);
  auto c = translate(m, cal, neuron, noise);
  c.set_stp(StpParams::renewing(10.0));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 4; ++j)
      if (m.weight(k, j) != 0) CHECK((c.weights[k * 4 + j] > 0) == (m.weight(k, j) > 0));
  const auto result = simulate(c, 200000.0, rng, {true, std::nullopt, 100.0});
  CHECK(kl_divergence(empirical_distribution(result.trace, 4), exact_distribution(m)) < 0.05);
}

TEST_CASE("clamping forces continuous firing or silence") {
  const auto& cal = default_calibration();
  Rng rng(18);
  const auto m = BoltzmannMachine::random(3, rng, 1.0, 1.0);
  auto c = translate(m, cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  const std::vector<Clamp> mask{Clamp::On, Clamp::Off, Clamp::Free};
  c = clamp(c, mask);
  const auto result = simulate(c, 1000.0, rng);
  std::size_t free_on = 0;
  for (std::size_t s = 0; s < result.trace.size(); ++s) {
    CHECK(result.trace.state(s)[0] == 1);
    CHECK(result.trace.state(s)[1] == 0);
    free_on += result.trace.state(s)[2];
  }
  CHECK(free_on > 0);
  CHECK(free_on < result.trace.size());
  const std::vector<Clamp> short_mask{Clamp::On};
  CHECK_THROWS_AS(clamp(c, short_mask), DimensionError);
}

TEST_CASE("network config validation") {
  auto c = lone_neuron(-50.0);
  CHECK(c.check().empty());
  c.dt = 2.0;
  c.sample_interval = 10.0;
  CHECK(!c.check().empty());
  c.dt = 0.3;
  CHECK_THROWS_AS(c.check(), InvalidArgument);  // tau_ref not a multiple of dt

  LifNetworkConfig two;
  two.n = 2;
  two.e_leak = {-50, -50};
  two.weights = {0, 1, 1, 0};
  CHECK(two.check().empty());
  two.weights[0] = 0.5;
  CHECK_THROWS_AS(two.check(), InvalidArgument);
  two.weights = {0, 1, 1};
  CHECK_THROWS_AS(two.check(), DimensionError);
  two.weights = {0, 1, 1, 0};
  two.stp_table = {StpParams{0.0, 10.0, 0.0}};
  CHECK_THROWS_AS(two.check(), InvalidArgument);
  two.stp_table = {StpParams::static_synapse()};
  two.stp_class = {0, 1, 0, 0};
  CHECK_THROWS_AS(two.check(), InvalidArgument);
  CHECK_THROWS_AS(LifParams{.v_reset = -40.0}.check(), InvalidArgument);
}

TEST_CASE("per-synapse plasticity classes") {
  const auto& cal = default_calibration();
  Rng rng(19);
  const auto m = BoltzmannMachine::random(5, rng, 1.0, 1.0);
  auto uniform = translate(m, cal, LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  uniform.set_stp(StpParams::renewing(10.0));
  auto classed = uniform;
  classed.stp_table = {StpParams::static_synapse(), StpParams::renewing(10.0)};
  classed.stp_class.assign(25, 1);
  Rng a(20), b(20), c(20);
  const auto reference = simulate(uniform, 2000.0, a).spikes;
  CHECK(simulate(classed, 2000.0, b).spikes == reference);
  classed.stp_class[0 * 5 + 1] = 0;
  CHECK(simulate(classed, 2000.0, c).spikes != reference);
}

TEST_CASE("spike text and network documents round-trip") {
  const std::vector<Spike> spikes{{0, 0.1}, {3, 12.300000000000001}, {1, 1e5}};
  std::stringstream ss;
  write_spikes(ss, spikes);
  CHECK(read_spikes(ss) == spikes);
  std::stringstream bad("0 1.0\n1 x\n");
  CHECK_THROWS_AS(read_spikes(bad), FormatError);
  std::stringstream negative("-1 2.0\n");
  CHECK_THROWS_AS(read_spikes(negative), FormatError);

  Rng rng(21);
  const auto m = BoltzmannMachine::random(4, rng, 1.0, 1.0);
  auto c = translate(m, default_calibration(), LifParams::cuba_defaults(), NoiseConfig::cuba_defaults());
  c.stp_table = {StpParams::static_synapse(), StpParams{0.3, 15.0, 40.0}};
  c.stp_class.assign(16, 1);
  c.clamp = {Clamp::Free, Clamp::On, Clamp::Off, Clamp::Free};
  const auto back = network_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(back.weights == c.weights);
  CHECK(back.e_leak == c.e_leak);
  CHECK(back.stp_table == c.stp_table);
  CHECK(back.stp_class == c.stp_class);
  CHECK(back.clamp == c.clamp);
  REQUIRE(back.calibration.has_value());
  CHECK(back.calibration->alpha == c.calibration->alpha);
  CHECK(back.calibration->leak_grid == c.calibration->leak_grid);
  Rng s1(22), s2(22);
  CHECK(simulate(back, 500.0, s1).spikes == simulate(c, 500.0, s2).spikes);

  auto doc = to_json(c);
  doc["neuron"]["kind"] = "izhikevich";
  CHECK_THROWS_AS(network_from_json(doc), FormatError);
  doc = to_json(c);
  doc.erase("weights");
  CHECK_THROWS_AS(network_from_json(doc), FormatError);
}
