#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpnet/boltzmann.hpp"
#include "stpnet/clamp.hpp"
#include "stpnet/rng.hpp"
#include "stpnet/stp.hpp"
#include "stpnet/trace.hpp"

namespace stpnet::lif {

enum class ModelKind { Cuba, Coba };

/// Neuron parameters. Units: nF, ms, mV; g_leak = C_m / tau_m in uS.
struct LifParams {
  double c_m = 0.2;
  double tau_m = 0.1;
  double tau_ref = 10.0;
  double tau_syn = 10.0;
  double v_thresh = -50.0;
  double v_reset = -50.01;
  double e_leak = -50.0;
  ModelKind kind = ModelKind::Cuba;
  double e_rev_exc = 0.0;
  double e_rev_inh = -100.0;

  /// Current-based effective model (the fast default).
  static LifParams cuba_defaults();
  /// Conductance-based model in the high-conductance regime.
  static LifParams coba_defaults();

  double g_leak() const { return c_m / tau_m; }
  void check() const;
};

/// Balanced Poisson background. Rates in kHz; weights are peak currents (nA,
/// CUBA) or peak conductances (uS, COBA) of one background event.
struct NoiseConfig {
  double rate_exc = 0.4;
  double rate_inh = 0.4;
  double weight_exc = 2.0;
  double weight_inh = 2.0;

  static NoiseConfig cuba_defaults();
  static NoiseConfig coba_defaults();
  void check() const;
};

/// Logistic fit p(z = 1) = sigma(alpha (E_l - midpoint)) of the free-neuron
/// activation as a function of its leak potential.
struct Calibration {
  double alpha = 1.0;     ///< 1/mV
  double midpoint = 0.0;  ///< mV, leak potential giving p = 1/2
  double residual_rms = 0.0;
  std::vector<double> leak_grid;
  std::vector<double> activation;

  /// Dimensionless shift of the activation, alpha * midpoint.
  double beta_shift() const { return alpha * midpoint; }
  double predict(double e_leak) const;
  void check() const;
};

using stpnet::Clamp;

/// Everything needed to simulate one network. Neurons share `neuron` except
/// for their leak potentials. `weights[post * n + pre]` holds the peak
/// synaptic current (CUBA) or signed conductance (COBA; the sign selects the
/// excitatory or inhibitory reversal potential).
struct LifNetworkConfig {
  std::size_t n = 0;
  LifParams neuron;
  std::vector<double> e_leak;
  std::vector<double> weights;
  std::vector<StpParams> stp_table{StpParams::static_synapse()};
  /// Per-synapse index into stp_table (same layout as weights); empty means
  /// every synapse uses stp_table[0].
  std::vector<std::uint16_t> stp_class;
  NoiseConfig noise;
  std::optional<Calibration> calibration;
  std::vector<Clamp> clamp;
  /// Magnitude of the clamping drive (nA).
  double clamp_current = 1000.0;
  double dt = 0.1;               ///< ms
  double sample_interval = 1.0;  ///< ms between recorded network states

  /// Every synapse gets the same plasticity parameters.
  void set_stp(const StpParams& p);
  /// Throws on structural errors; returns a warning text for soft issues
  /// (dt above tau_syn / 10), empty otherwise.
  std::string check() const;
};

struct Spike {
  std::uint32_t neuron;
  double time;  ///< ms

  friend bool operator==(const Spike&, const Spike&) = default;
};

struct SimulationOptions {
  /// With false, every spike has efficacy 1 (no plasticity code runs).
  bool stp_enabled = true;
  /// Record the membrane potential of this neuron at every step.
  std::optional<std::size_t> probe;
  /// No states are recorded before this time (ms); spikes are always kept.
  double burn_in = 0.0;
};

struct SimulationResult {
  std::vector<Spike> spikes;
  SampleTrace trace;
  std::vector<double> probe_trace;
  std::string warning;
};

/// Clock-driven simulation over `duration` ms. A spike emitted during step n
/// is stamped (n + 1) dt. States are recorded every `config.sample_interval`
/// ms; a neuron is in state 1 for the tau_ref / dt steps starting at its spike
/// stamp, evaluated in integer step arithmetic so the windows are exact.
SimulationResult simulate(const LifNetworkConfig& config, double duration, Rng& rng,
                          const SimulationOptions& options = {});

/// z_k(t) = 1 iff t lies in [t_s, t_s + tau_ref) for a spike of neuron k.
SampleTrace extract_states(std::span<const Spike> spikes, std::size_t n_neurons, double tau_ref,
                           std::span<const double> sample_times);

struct CalibrationOptions {
  std::size_t points = 21;
  double duration = 20000.0;       ///< ms per grid point
  double bracket_duration = 5000.0;
  double dt = 0.1;
  double max_residual = 0.02;
};

/// Measures the free-neuron activation on a grid of leak potentials spanning
/// roughly p = 0.01 .. 0.99 and fits a logistic to it.
Calibration calibrate(const LifParams& neuron, const NoiseConfig& noise, Rng& rng,
                      const CalibrationOptions& options = {});

/// tau_eff / (tau_syn - tau_eff) * [tau_syn (1 - 1/e) - tau_eff (1 - e^{-tau_syn/tau_eff})]:
/// the mean over tau_syn of the PSP kernel produced by a unit-peak synaptic
/// input on a membrane with time constant tau_eff, in ms. At tau_syn ==
/// tau_eff it takes its limit tau_syn (1 - 2/e).
double psp_average_factor(double tau_syn, double tau_eff);

/// Mean membrane time constant and free membrane potential under the
/// background noise (for CUBA: tau_m and E_l).
double effective_tau(const LifParams& neuron, const NoiseConfig& noise);
double mean_free_potential(const LifParams& neuron, const NoiseConfig& noise, double e_leak);

/// Boltzmann parameters to network parameters: each weight is scaled so the
/// mean PSP over the refractory window shifts the free membrane potential as
/// much as a leak change of w / alpha would, and each bias shifts the
/// neuron's leak potential to midpoint + b / alpha.
LifNetworkConfig translate(const BoltzmannMachine& machine, const Calibration& calibration, const LifParams& neuron,
                           const NoiseConfig& noise);

/// Drives clamped neurons with a strong current: On fires at the maximal
/// rate, Off stays silent. Free entries leave the neuron untouched.
LifNetworkConfig clamp(LifNetworkConfig config, std::span<const Clamp> mask);

/// "neuron_id time_ms" per line.
void write_spikes(std::ostream& out, std::span<const Spike> spikes);
std::vector<Spike> read_spikes(std::istream& in);

nlohmann::json to_json(const LifNetworkConfig& config);
LifNetworkConfig network_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Calibration& calibration);
Calibration calibration_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StpParams& p);
StpParams stp_from_json(const nlohmann::json& doc);

}  // namespace stpnet::lif
