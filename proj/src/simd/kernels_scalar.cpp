#include <bit>

#include "kernels_impl.hpp"

namespace stpnet::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

std::uint64_t mismatch_count(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < words; ++i) count += static_cast<std::uint64_t>(std::popcount(a[i] ^ b[i]));
  return count;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void cuba_step(const CubaStep& s) {
  for (std::size_t k = 0; k < s.n; ++k) {
    const std::int32_t r = s.refractory[k];
    if (r > 1) {
      s.refractory[k] = r - 1;
      s.u[k] = s.v_reset;
      s.spiked[k] = 0;
    } else {
      const double start = (r == 1) ? s.v_reset : s.u[k];
      const double u_inf = s.e_leak[k] + (s.current[k] + s.external[k]) * s.inv_g_leak;
      const double next = u_inf + (start - u_inf) * s.mem_decay;
      if (next >= s.v_thresh) {
        s.u[k] = s.v_reset;
        s.refractory[k] = s.refractory_steps;
        s.spiked[k] = 1;
      } else {
        s.u[k] = next;
        s.refractory[k] = 0;
        s.spiked[k] = 0;
      }
    }
    s.current[k] *= s.syn_decay;
  }
}

}  // namespace stpnet::simd::scalar
