#include "stpnet/stp.hpp"

#include <cmath>

#include "stpnet/error.hpp"

namespace stpnet::lif {

void StpParams::check() const {
  if (!(u0 >= 0.0 && u0 <= 1.0)) throw InvalidArgument("STP U0 must lie in [0, 1]");
  if (!(tau_rec >= 0.0) || !(tau_fac >= 0.0)) throw InvalidArgument("STP time constants must be nonnegative");
}

SynapseState stp_advance(SynapseState s, const StpParams& p, double dt_elapsed) {
  if (dt_elapsed < 0.0) throw InvalidArgument("negative STP advance");
  if (dt_elapsed == 0.0) return s;
  s.r = p.tau_rec > 0.0 ? 1.0 - (1.0 - s.r) * std::exp(-dt_elapsed / p.tau_rec) : 1.0;
  s.u = p.tau_fac > 0.0 ? s.u * std::exp(-dt_elapsed / p.tau_fac) : 0.0;
  s.last_update += dt_elapsed;
  return s;
}

std::pair<SynapseState, double> stp_on_spike(SynapseState s, const StpParams& p) {
  s.u += p.u0 * (1.0 - s.u);
  const double efficacy = s.u * s.r;
  s.r -= efficacy;
  return {s, efficacy};
}

}  // namespace stpnet::lif
