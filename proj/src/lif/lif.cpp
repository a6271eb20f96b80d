#include "stpnet/lif.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "stpnet/error.hpp"
#include "stpnet/simd/kernels.hpp"

namespace stpnet::lif {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(double x) { return std::isfinite(x); }

std::int64_t steps_for(double span, double dt, const char* what) {
  const double ratio = span / dt;
  const double rounded = std::round(ratio);
  if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
    throw InvalidArgument(std::string(what) + " must be a positive integer multiple of dt");
  }
  return static_cast<std::int64_t>(rounded);
}

/// One Poisson background source; the next event time is kept between steps
/// so event times are exact and independent of dt.
struct PoissonStream {
  double rate = 0.0;
  double next = kInf;

  void start(Rng& rng) { next = rate > 0.0 ? rng.exponential(rate) : kInf; }

  /// Number of events in (.., t_end].
  int drain(double t_end, Rng& rng) {
    int count = 0;
    while (next <= t_end) {
      ++count;
      next += rng.exponential(rate);
    }
    return count;
  }
};

/// Transposed synapse table: column j (outgoing synapses of neuron j) is
/// contiguous so a spike is delivered with one axpy.
struct Delivery {
  std::size_t n = 0;
  std::vector<double> exc;  // CUBA: signed currents; COBA: excitatory conductances
  std::vector<double> inh;  // COBA only: inhibitory conductances (magnitudes)
  std::vector<std::uint16_t> cls;
  std::vector<std::uint8_t> uniform_column;
};

Delivery build_delivery(const LifNetworkConfig& c) {
  Delivery d;
  d.n = c.n;
  const std::size_t n = c.n;
  const bool coba = c.neuron.kind == ModelKind::Coba;
  d.exc.assign(n * n, 0.0);
  if (coba) d.inh.assign(n * n, 0.0);
  d.cls.assign(n * n, 0);
  d.uniform_column.assign(n, 1);
  for (std::size_t post = 0; post < n; ++post) {
    for (std::size_t pre = 0; pre < n; ++pre) {
      const double w = c.weights[post * n + pre];
      const std::size_t t = pre * n + post;
      if (coba && w < 0.0) {
        d.inh[t] = -w;
      } else {
        d.exc[t] = w;
      }
      if (!c.stp_class.empty()) d.cls[t] = c.stp_class[post * n + pre];
    }
  }
  for (std::size_t pre = 0; pre < n; ++pre) {
    for (std::size_t post = 1; post < n; ++post) {
      if (d.cls[pre * n + post] != d.cls[pre * n]) d.uniform_column[pre] = 0;
    }
  }
  return d;
}

void coba_step(std::size_t n, const LifParams& p, double dt, std::int32_t refractory_steps, double syn_decay,
               std::vector<double>& u, std::vector<double>& g_exc, std::vector<double>& g_inh,
               const std::vector<double>& e_leak, const std::vector<double>& external,
               std::vector<std::int32_t>& refractory, std::vector<std::uint8_t>& spiked) {
  const double g_l = p.g_leak();
  for (std::size_t k = 0; k < n; ++k) {
    const std::int32_t r = refractory[k];
    if (r > 1) {
      refractory[k] = r - 1;
      u[k] = p.v_reset;
      spiked[k] = 0;
    } else {
      const double start = (r == 1) ? p.v_reset : u[k];
      const double g_tot = g_l + g_exc[k] + g_inh[k];
      const double u_inf = (g_l * e_leak[k] + g_exc[k] * p.e_rev_exc + g_inh[k] * p.e_rev_inh + external[k]) / g_tot;
      const double next = u_inf + (start - u_inf) * std::exp(-dt * g_tot / p.c_m);
      if (next >= p.v_thresh) {
        u[k] = p.v_reset;
        refractory[k] = refractory_steps;
        spiked[k] = 1;
      } else {
        u[k] = next;
        refractory[k] = 0;
        spiked[k] = 0;
      }
    }
    g_exc[k] *= syn_decay;
    g_inh[k] *= syn_decay;
  }
}

double mean_conductance(double rate, double weight, double tau_syn) { return rate * weight * tau_syn; }

// Damped Gauss-Newton fit of p = sigma(alpha (x - m)).
std::pair<double, double> fit_logistic(const std::vector<double>& x, const std::vector<double>& p) {
  double sxx = 0, sx = 0, sy = 0, sxy = 0, count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double q = std::clamp(p[i], 0.02, 0.98);
    const double y = std::log(q / (1.0 - q));
    sx += x[i];
    sy += y;
    sxx += x[i] * x[i];
    sxy += x[i] * y;
    count += 1;
  }
  const double denom = count * sxx - sx * sx;
  double alpha = denom > 0 ? (count * sxy - sx * sy) / denom : 1.0;
  if (!(alpha > 0)) alpha = 1.0;
  double mid = (sx - (sy / alpha)) / count;

  auto sse = [&](double a, double m) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = logistic(a * (x[i] - m)) - p[i];
      s += r * r;
    }
    return s;
  };
  double lambda = 1e-3;
  double current = sse(alpha, mid);
  for (int iter = 0; iter < 500; ++iter) {
    double jaa = 0, jam = 0, jmm = 0, ga = 0, gm = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = logistic(alpha * (x[i] - mid));
      const double ds = s * (1.0 - s);
      const double da = ds * (x[i] - mid);
      const double dm = -ds * alpha;
      const double r = s - p[i];
      jaa += da * da;
      jam += da * dm;
      jmm += dm * dm;
      ga += da * r;
      gm += dm * r;
    }
    bool improved = false;
    while (lambda < 1e12) {
      const double a11 = jaa * (1 + lambda), a22 = jmm * (1 + lambda);
      const double det = a11 * a22 - jam * jam;
      if (det <= 0) {
        lambda *= 10;
        continue;
      }
      const double step_a = -(a22 * ga - jam * gm) / det;
      const double step_m = -(a11 * gm - jam * ga) / det;
      const double next = sse(alpha + step_a, mid + step_m);
      if (alpha + step_a > 0 && next <= current) {
        alpha += step_a;
        mid += step_m;
        improved = current - next > 1e-15 * (1 + current);
        current = next;
        lambda = std::max(lambda / 10, 1e-12);
        break;
      }
      lambda *= 10;
    }
    if (!improved) break;
  }
  return {alpha, mid};
}

// Fraction of [0, duration) a lone neuron spends refractory.
double measure_activation(const LifParams& neuron, const NoiseConfig& noise, double e_leak, double duration,
                          double dt, Rng& rng) {
  LifNetworkConfig c;
  c.n = 1;
  c.neuron = neuron;
  c.neuron.e_leak = e_leak;
  c.e_leak = {e_leak};
  c.weights = {0.0};
  c.noise = noise;
  c.dt = dt;
  c.sample_interval = duration;
  const auto result = simulate(c, duration, rng, SimulationOptions{false, std::nullopt, duration});
  double on = 0.0;
  for (const auto& s : result.spikes) on += std::min(neuron.tau_ref, duration - s.time);
  return on / duration;
}

template <class T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  return doc.contains(key) ? doc.at(key).get<T>() : fallback;
}

}  // namespace

LifParams LifParams::cuba_defaults() { return LifParams{}; }

LifParams LifParams::coba_defaults() {
  LifParams p;
  p.c_m = 0.1;
  p.tau_m = 20.0;
  p.tau_ref = 10.0;
  p.tau_syn = 10.0;
  p.v_thresh = -50.0;
  p.v_reset = -53.0;
  p.e_leak = -50.0;
  p.kind = ModelKind::Coba;
  return p;
}

void LifParams::check() const {
  if (!(c_m > 0) || !(tau_m > 0) || !(tau_ref > 0) || !(tau_syn > 0))
    throw InvalidArgument("neuron capacitance and time constants must be positive");
  if (!finite(v_thresh) || !finite(v_reset) || !finite(e_leak) || !finite(e_rev_exc) || !finite(e_rev_inh))
    throw InvalidArgument("neuron potentials must be finite");
  if (v_reset > v_thresh) throw InvalidArgument("reset potential above threshold");
}

NoiseConfig NoiseConfig::cuba_defaults() { return NoiseConfig{}; }

NoiseConfig NoiseConfig::coba_defaults() { return NoiseConfig{5.0, 5.0, 0.002, 0.002}; }

void NoiseConfig::check() const {
  if (!(rate_exc >= 0) || !(rate_inh >= 0) || !finite(rate_exc) || !finite(rate_inh))
    throw InvalidArgument("noise rates must be finite and nonnegative");
  if (!(weight_exc >= 0) || !(weight_inh >= 0) || !finite(weight_exc) || !finite(weight_inh))
    throw InvalidArgument("noise weights must be finite and nonnegative");
}

double Calibration::predict(double e_leak) const { return logistic(alpha * (e_leak - midpoint)); }

void Calibration::check() const {
  if (!(alpha > 0) || !finite(alpha)) throw InvalidArgument("calibration alpha must be positive");
  if (!finite(midpoint)) throw InvalidArgument("calibration midpoint must be finite");
  if (leak_grid.size() != activation.size()) throw DimensionError("calibration grid and activation differ in length");
}

void LifNetworkConfig::set_stp(const StpParams& p) {
  stp_table = {p};
  stp_class.clear();
}

std::string LifNetworkConfig::check() const {
  if (n == 0) throw InvalidArgument("network has no neurons");
  neuron.check();
  noise.check();
  if (e_leak.size() != n) throw DimensionError("e_leak length differs from neuron count");
  if (weights.size() != n * n) throw DimensionError("synapse table is not n x n");
  for (std::size_t k = 0; k < n; ++k) {
    if (!finite(e_leak[k])) throw InvalidArgument("leak potentials must be finite");
    if (weights[k * n + k] != 0.0) throw InvalidArgument("self-synapses must be zero");
  }
  for (double w : weights)
    if (!finite(w)) throw InvalidArgument("synaptic weights must be finite");
  if (stp_table.empty() || stp_table.size() > 65535) throw InvalidArgument("STP table must have 1..65535 entries");
  for (const auto& p : stp_table) {
    p.check();
    if (!(p.u0 > 0)) throw InvalidArgument("network STP entries need U0 > 0");
  }
  if (!stp_class.empty()) {
    if (stp_class.size() != n * n) throw DimensionError("STP class table is not n x n");
    for (auto c : stp_class)
      if (c >= stp_table.size()) throw InvalidArgument("STP class index out of range");
  }
  if (!clamp.empty() && clamp.size() != n) throw DimensionError("clamp mask length differs from neuron count");
  if (!(clamp_current >= 0) || !finite(clamp_current)) throw InvalidArgument("clamp current must be nonnegative");
  if (!(dt > 0) || !finite(dt)) throw InvalidArgument("dt must be positive");
  steps_for(neuron.tau_ref, dt, "tau_ref");
  steps_for(sample_interval, dt, "sample_interval");
  if (dt > neuron.tau_syn / 10.0) {
    std::ostringstream msg;
    msg << "dt = " << dt << " ms exceeds tau_syn / 10; exponential-Euler decay error grows above 1% per step";
    return msg.str();
  }
  return {};
}

SimulationResult simulate(const LifNetworkConfig& config, double duration, Rng& rng,
                          const SimulationOptions& options) {
  SimulationResult result;
  result.warning = config.check();
  if (!(duration >= 0) || !finite(duration)) throw InvalidArgument("duration must be finite and nonnegative");
  if (options.probe && *options.probe >= config.n) throw InvalidArgument("probe neuron out of range");

  const std::size_t n = config.n;
  const LifParams& p = config.neuron;
  const bool coba = p.kind == ModelKind::Coba;
  const double dt = config.dt;
  const auto total_steps = static_cast<std::int64_t>(std::floor(duration / dt + 1e-9));
  const auto refractory_steps = static_cast<std::int32_t>(steps_for(p.tau_ref, dt, "tau_ref"));
  const std::int64_t sample_steps = steps_for(config.sample_interval, dt, "sample_interval");
  const double syn_decay = std::exp(-dt / p.tau_syn);

  std::vector<double> u(config.e_leak), current(n, 0.0), inh(coba ? n : 0, 0.0), external(n, 0.0);
  std::vector<std::int32_t> refractory(n, 0);
  std::vector<std::uint8_t> spiked(n, 0);
  std::vector<std::int64_t> last_spike(n, std::numeric_limits<std::int64_t>::min() / 2);
  for (std::size_t k = 0; k < config.clamp.size(); ++k) {
    if (config.clamp[k] == Clamp::On) external[k] = config.clamp_current;
    if (config.clamp[k] == Clamp::Off) external[k] = -config.clamp_current;
  }

  std::vector<PoissonStream> exc_noise(n), inh_noise(n);
  for (std::size_t k = 0; k < n; ++k) {
    exc_noise[k].rate = config.noise.rate_exc;
    inh_noise[k].rate = config.noise.rate_inh;
    exc_noise[k].start(rng);
    inh_noise[k].start(rng);
  }

  const Delivery delivery = build_delivery(config);
  const std::size_t n_classes = config.stp_table.size();
  std::vector<SynapseState> synapses(n * n_classes);
  std::vector<double> scale(n_classes, 1.0);
  const bool plastic = options.stp_enabled;

  const auto& kt = simd::kernels();
  simd::CubaStep step_args;
  step_args.n = n;
  step_args.u = u.data();
  step_args.current = current.data();
  step_args.e_leak = config.e_leak.data();
  step_args.external = external.data();
  step_args.refractory = refractory.data();
  step_args.spiked = spiked.data();
  step_args.syn_decay = syn_decay;
  step_args.mem_decay = std::exp(-dt / p.tau_m);
  step_args.inv_g_leak = 1.0 / p.g_leak();
  step_args.v_thresh = p.v_thresh;
  step_args.v_reset = p.v_reset;
  step_args.refractory_steps = refractory_steps;

  result.trace = SampleTrace(n);
  if (options.probe) result.probe_trace.reserve(static_cast<std::size_t>(total_steps));
  BinaryState z(n, 0);

  for (std::int64_t step = 0; step < total_steps; ++step) {
    const std::int64_t stamp = step + 1;
    const double t_end = static_cast<double>(stamp) * dt;

    for (std::size_t k = 0; k < n; ++k) {
      const int e = exc_noise[k].drain(t_end, rng);
      const int i = inh_noise[k].drain(t_end, rng);
      if (coba) {
        current[k] += e * config.noise.weight_exc;
        inh[k] += i * config.noise.weight_inh;
      } else {
        current[k] += e * config.noise.weight_exc - i * config.noise.weight_inh;
      }
    }

    if (coba) {
      coba_step(n, p, dt, refractory_steps, syn_decay, u, current, inh, config.e_leak, external, refractory, spiked);
    } else {
      kt.cuba_step(step_args);
    }

    for (std::size_t j = 0; j < n; ++j) {
      if (!spiked[j]) continue;
      result.spikes.push_back({static_cast<std::uint32_t>(j), t_end});
      last_spike[j] = stamp;
      if (plastic) {
        for (std::size_t c = 0; c < n_classes; ++c) {
          const StpParams& sp = config.stp_table[c];
          SynapseState& s = synapses[j * n_classes + c];
          s = stp_advance(s, sp, t_end - s.last_update);
          s.last_update = t_end;
          const auto [next, efficacy] = stp_on_spike(s, sp);
          s = next;
          scale[c] = efficacy / sp.u0;
        }
      }
      const double* col = delivery.exc.data() + j * n;
      if (delivery.uniform_column[j]) {
        const double a = scale[delivery.cls[j * n]];
        kt.axpy(a, col, current.data(), n);
        if (coba) kt.axpy(a, delivery.inh.data() + j * n, inh.data(), n);
      } else {
        const std::uint16_t* cls = delivery.cls.data() + j * n;
        for (std::size_t k = 0; k < n; ++k) {
          current[k] += scale[cls[k]] * col[k];
          if (coba) inh[k] += scale[cls[k]] * delivery.inh[j * n + k];
        }
      }
    }

    if (options.probe) result.probe_trace.push_back(u[*options.probe]);
    if (stamp % sample_steps == 0 && t_end >= options.burn_in) {
      for (std::size_t k = 0; k < n; ++k) z[k] = (stamp - last_spike[k]) < refractory_steps ? 1 : 0;
      result.trace.push(z, t_end);
    }
  }
  return result;
}

SampleTrace extract_states(std::span<const Spike> spikes, std::size_t n_neurons, double tau_ref,
                           std::span<const double> sample_times) {
  if (!(tau_ref > 0)) throw InvalidArgument("tau_ref must be positive");
  if (!std::is_sorted(sample_times.begin(), sample_times.end())) throw InvalidArgument("sample times must be sorted");
  std::vector<std::vector<double>> per_neuron(n_neurons);
  for (const auto& s : spikes) {
    if (s.neuron >= n_neurons) throw InvalidArgument("spike from a neuron outside the network");
    per_neuron[s.neuron].push_back(s.time);
  }
  for (auto& times : per_neuron) std::sort(times.begin(), times.end());

  std::vector<std::size_t> cursor(n_neurons, 0);
  SampleTrace trace(n_neurons);
  BinaryState z(n_neurons, 0);
  for (double t : sample_times) {
    for (std::size_t k = 0; k < n_neurons; ++k) {
      const auto& times = per_neuron[k];
      std::size_t& c = cursor[k];
      while (c < times.size() && times[c] <= t) ++c;
      // Windows of earlier spikes end no later than that of the latest one.
      z[k] = (c > 0 && t < times[c - 1] + tau_ref) ? 1 : 0;
    }
    trace.push(z, t);
  }
  return trace;
}

Calibration calibrate(const LifParams& neuron, const NoiseConfig& noise, Rng& rng, const CalibrationOptions& options) {
  neuron.check();
  noise.check();
  if (!(noise.rate_exc > 0) || !(noise.rate_inh > 0)) throw InvalidArgument("calibration needs nonzero noise rates");
  if (options.points < 15) throw InvalidArgument("calibration needs at least 15 grid points");

  auto activation = [&](double e_leak, double duration) {
    Rng local(rng.split());
    return measure_activation(neuron, noise, e_leak, duration, options.dt, local);
  };

  // Bracket p = 0.01 .. 0.99 around the threshold, then locate the transition
  // with a coarse fit before measuring the final grid.
  const double centre = neuron.v_thresh;
  double lo = centre - 1.0, hi = centre + 1.0;
  for (int i = 0; activation(lo, options.bracket_duration) > 0.01; ++i) {
    if (i == 12) throw FitError("calibration could not find a silent leak potential");
    lo = centre - 2.0 * (centre - lo);
  }
  for (int i = 0; activation(hi, options.bracket_duration) < 0.99; ++i) {
    if (i == 12) throw FitError("calibration could not find a saturating leak potential");
    hi = centre + 2.0 * (hi - centre);
  }
  std::vector<double> coarse_x, coarse_p;
  for (int i = 0; i < 11; ++i) {
    const double e = lo + (hi - lo) * i / 10.0;
    coarse_x.push_back(e);
    coarse_p.push_back(activation(e, options.bracket_duration));
  }
  const auto [alpha0, mid0] = fit_logistic(coarse_x, coarse_p);
  const double logit99 = std::log(99.0);

  Calibration cal;
  const double first = mid0 - logit99 / alpha0, last = mid0 + logit99 / alpha0;
  for (std::size_t i = 0; i < options.points; ++i) {
    const double e = first + (last - first) * static_cast<double>(i) / static_cast<double>(options.points - 1);
    cal.leak_grid.push_back(e);
    cal.activation.push_back(activation(e, options.duration));
  }
  std::tie(cal.alpha, cal.midpoint) = fit_logistic(cal.leak_grid, cal.activation);
  double sse = 0;
  for (std::size_t i = 0; i < cal.leak_grid.size(); ++i) {
    const double r = cal.predict(cal.leak_grid[i]) - cal.activation[i];
    sse += r * r;
  }
  cal.residual_rms = std::sqrt(sse / static_cast<double>(cal.leak_grid.size()));
  if (cal.residual_rms > options.max_residual) {
    std::ostringstream msg;
    msg << "logistic fit residual " << cal.residual_rms << " exceeds " << options.max_residual
        << "; the noise does not put the neuron in a sampling regime";
    throw FitError(msg.str());
  }
  return cal;
}

double psp_average_factor(double tau_syn, double tau_eff) {
  if (!(tau_syn > 0) || !(tau_eff > 0)) throw InvalidArgument("time constants must be positive");
  const double ratio = tau_syn / tau_eff;
  if (std::abs(ratio - 1.0) < 1e-6) return tau_syn * (1.0 - 2.0 / std::exp(1.0));
  const double bracket = tau_syn * (std::exp(-1.0) - 1.0) - tau_eff * std::expm1(-ratio);
  return bracket / (1.0 - ratio);
}

double effective_tau(const LifParams& neuron, const NoiseConfig& noise) {
  if (neuron.kind == ModelKind::Cuba) return neuron.tau_m;
  const double g = neuron.g_leak() + mean_conductance(noise.rate_exc, noise.weight_exc, neuron.tau_syn) +
                   mean_conductance(noise.rate_inh, noise.weight_inh, neuron.tau_syn);
  return neuron.c_m / g;
}

double mean_free_potential(const LifParams& neuron, const NoiseConfig& noise, double e_leak) {
  const double ge = mean_conductance(noise.rate_exc, noise.weight_exc, neuron.tau_syn);
  const double gi = mean_conductance(noise.rate_inh, noise.weight_inh, neuron.tau_syn);
  if (neuron.kind == ModelKind::Cuba) return e_leak + (ge - gi) / neuron.g_leak();
  const double gl = neuron.g_leak();
  return (gl * e_leak + ge * neuron.e_rev_exc + gi * neuron.e_rev_inh) / (gl + ge + gi);
}

LifNetworkConfig translate(const BoltzmannMachine& machine, const Calibration& calibration, const LifParams& neuron,
                           const NoiseConfig& noise) {
  calibration.check();
  neuron.check();
  machine.validate();
  const std::size_t n = machine.size();
  LifNetworkConfig c;
  c.n = n;
  c.neuron = neuron;
  c.neuron.e_leak = calibration.midpoint;
  c.noise = noise;
  c.calibration = calibration;
  c.e_leak.resize(n);
  c.weights.assign(n * n, 0.0);

  const double tau_eff = effective_tau(neuron, noise);
  const double factor = psp_average_factor(neuron.tau_syn, tau_eff);
  const double mu = mean_free_potential(neuron, noise, calibration.midpoint);
  // The calibration slope is per mV of leak potential; PSPs move the free
  // membrane potential, which follows the leak with gain g_l / <g_tot>.
  const double alpha_membrane = calibration.alpha * neuron.tau_m / tau_eff;
  for (std::size_t k = 0; k < n; ++k) {
    c.e_leak[k] = calibration.midpoint + machine.bias(k) / calibration.alpha;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = machine.weight(k, j);
      if (w == 0.0 || k == j) continue;
      double scale = neuron.c_m / (alpha_membrane * factor);
      if (neuron.kind == ModelKind::Coba) {
        const double driving = (w > 0 ? neuron.e_rev_exc : neuron.e_rev_inh) - mu;
        scale /= std::abs(driving);
      }
      c.weights[k * n + j] = w * scale;
    }
  }
  return c;
}

LifNetworkConfig clamp(LifNetworkConfig config, std::span<const Clamp> mask) {
  if (mask.size() != config.n) throw DimensionError("clamp mask length differs from neuron count");
  config.clamp.assign(mask.begin(), mask.end());
  return config;
}

void write_spikes(std::ostream& out, std::span<const Spike> spikes) {
  std::array<char, 64> buf{};
  for (const auto& s : spikes) {
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), s.time);
    out << s.neuron << ' ' << std::string_view(buf.data(), static_cast<std::size_t>(res.ptr - buf.data())) << '\n';
  }
}

std::vector<Spike> read_spikes(std::istream& in) {
  std::vector<Spike> spikes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    long long neuron = -1;
    double time = 0;
    std::string extra;
    if (!(fields >> neuron >> time) || (fields >> extra) || neuron < 0 || neuron > UINT32_MAX || !finite(time)) {
      throw FormatError("malformed spike record on line " + std::to_string(line_no));
    }
    spikes.push_back({static_cast<std::uint32_t>(neuron), time});
  }
  return spikes;
}

nlohmann::json to_json(const StpParams& p) { return {{"u0", p.u0}, {"tau_rec", p.tau_rec}, {"tau_fac", p.tau_fac}}; }

StpParams stp_from_json(const nlohmann::json& doc) {
  StpParams p{doc.at("u0").get<double>(), doc.at("tau_rec").get<double>(), doc.at("tau_fac").get<double>()};
  p.check();
  return p;
}

nlohmann::json to_json(const Calibration& c) {
  return {{"alpha", c.alpha},         {"midpoint", c.midpoint},     {"beta_shift", c.beta_shift()},
          {"residual_rms", c.residual_rms}, {"leak_grid", c.leak_grid}, {"activation", c.activation}};
}

Calibration calibration_from_json(const nlohmann::json& doc) {
  try {
    Calibration c;
    c.alpha = doc.at("alpha").get<double>();
    c.midpoint = doc.at("midpoint").get<double>();
    c.residual_rms = get_or(doc, "residual_rms", 0.0);
    c.leak_grid = get_or(doc, "leak_grid", std::vector<double>{});
    c.activation = get_or(doc, "activation", std::vector<double>{});
    c.check();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed calibration document: ") + e.what());
  }
}

nlohmann::json to_json(const LifNetworkConfig& c) {
  const LifParams& p = c.neuron;
  nlohmann::json neuron{{"kind", p.kind == ModelKind::Cuba ? "cuba" : "coba"},
                        {"c_m", p.c_m},
                        {"tau_m", p.tau_m},
                        {"tau_ref", p.tau_ref},
                        {"tau_syn", p.tau_syn},
                        {"v_thresh", p.v_thresh},
                        {"v_reset", p.v_reset},
                        {"e_leak", p.e_leak},
                        {"e_rev_exc", p.e_rev_exc},
                        {"e_rev_inh", p.e_rev_inh}};
  nlohmann::json stp = nlohmann::json::array();
  for (const auto& s : c.stp_table) stp.push_back(to_json(s));
  std::vector<int> clamp_values;
  for (auto v : c.clamp) clamp_values.push_back(static_cast<int>(v));
  nlohmann::json doc{{"n", c.n},
                     {"neuron", neuron},
                     {"e_leak", c.e_leak},
                     {"weights", c.weights},
                     {"stp_table", stp},
                     {"stp_class", c.stp_class},
                     {"noise",
                      {{"rate_exc", c.noise.rate_exc},
                       {"rate_inh", c.noise.rate_inh},
                       {"weight_exc", c.noise.weight_exc},
                       {"weight_inh", c.noise.weight_inh}}},
                     {"clamp", clamp_values},
                     {"clamp_current", c.clamp_current},
                     {"dt", c.dt},
                     {"sample_interval", c.sample_interval}};
  if (c.calibration) doc["calibration"] = to_json(*c.calibration);
  return doc;
}

LifNetworkConfig network_from_json(const nlohmann::json& doc) {
  try {
    LifNetworkConfig c;
    c.n = doc.at("n").get<std::size_t>();
    const auto& nj = doc.at("neuron");
    const auto kind = nj.at("kind").get<std::string>();
    if (kind != "cuba" && kind != "coba") throw FormatError("neuron kind must be \"cuba\" or \"coba\"");
    LifParams& p = c.neuron;
    p.kind = kind == "cuba" ? ModelKind::Cuba : ModelKind::Coba;
    p.c_m = nj.at("c_m").get<double>();
    p.tau_m = nj.at("tau_m").get<double>();
    p.tau_ref = nj.at("tau_ref").get<double>();
    p.tau_syn = nj.at("tau_syn").get<double>();
    p.v_thresh = nj.at("v_thresh").get<double>();
    p.v_reset = nj.at("v_reset").get<double>();
    p.e_leak = get_or(nj, "e_leak", p.e_leak);
    p.e_rev_exc = get_or(nj, "e_rev_exc", p.e_rev_exc);
    p.e_rev_inh = get_or(nj, "e_rev_inh", p.e_rev_inh);
    c.e_leak = doc.at("e_leak").get<std::vector<double>>();
    c.weights = doc.at("weights").get<std::vector<double>>();
    c.stp_table.clear();
    for (const auto& s : doc.at("stp_table")) c.stp_table.push_back(stp_from_json(s));
    c.stp_class = get_or(doc, "stp_class", std::vector<std::uint16_t>{});
    const auto& noise = doc.at("noise");
    c.noise = {noise.at("rate_exc").get<double>(), noise.at("rate_inh").get<double>(),
               noise.at("weight_exc").get<double>(), noise.at("weight_inh").get<double>()};
    for (int v : get_or(doc, "clamp", std::vector<int>{})) {
      if (v < -1 || v > 1) throw FormatError("clamp entries must be -1, 0 or 1");
      c.clamp.push_back(static_cast<Clamp>(v));
    }
    c.clamp_current = get_or(doc, "clamp_current", c.clamp_current);
    c.dt = get_or(doc, "dt", c.dt);
    c.sample_interval = get_or(doc, "sample_interval", c.sample_interval);
    if (doc.contains("calibration")) c.calibration = calibration_from_json(doc.at("calibration"));
    c.check();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid network document: ") + e.what());
  }
}

}  // namespace stpnet::lif
