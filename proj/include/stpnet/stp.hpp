#pragma once

#include <utility>

namespace stpnet::lif {

/// Tsodyks-Markram short-term plasticity parameters.
///
/// (1, 0, 0) is a static synapse; (1, tau_syn, 0) is the renewing synapse
/// whose running PSP average stays constant during a burst.
struct StpParams {
  double u0 = 1.0;       ///< baseline utilization in [0, 1]
  double tau_rec = 0.0;  ///< ms; 0 means instantaneous recovery
  double tau_fac = 0.0;  ///< ms; 0 means no facilitation memory

  static constexpr StpParams static_synapse() { return {1.0, 0.0, 0.0}; }
  static constexpr StpParams renewing(double tau_syn) { return {1.0, tau_syn, 0.0}; }

  bool is_static() const { return u0 == 1.0 && tau_rec == 0.0 && tau_fac == 0.0; }
  void check() const;

  friend bool operator==(const StpParams&, const StpParams&) = default;
};

/// Available resources R and utilization U of one synapse. A rested synapse
/// has R = 1 and U = 0.
struct SynapseState {
  double r = 1.0;
  double u = 0.0;
  double last_update = 0.0;  ///< ms
};

/// Closed-form relaxation between spikes over `dt_elapsed` ms.
SynapseState stp_advance(SynapseState s, const StpParams& p, double dt_elapsed);

/// Spike arrival: utilization is raised first (U+ = U + U0 (1 - U)), the
/// efficacy U+ R is returned, then R is depleted by U+ R.
std::pair<SynapseState, double> stp_on_spike(SynapseState s, const StpParams& p);

}  // namespace stpnet::lif
