#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace stpnet::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Arguments for one clock tick of a population of current-based LIF neurons.
///
/// Per neuron, in order: a neuron with more than one refractory step left is
/// held at reset; otherwise the membrane relaxes for one step towards
/// e_leak + (current + external) / g_l (starting from reset if the refractory
/// period ends this step), and a threshold crossing emits a spike, resets the
/// membrane and reloads the refractory counter. Finally the synaptic current
/// decays by one step.
struct CubaStep {
  std::size_t n = 0;
  double* u = nullptr;
  double* current = nullptr;
  const double* e_leak = nullptr;
  const double* external = nullptr;
  std::int32_t* refractory = nullptr;
  std::uint8_t* spiked = nullptr;
  double syn_decay = 0;
  double mem_decay = 0;
  double inv_g_leak = 0;
  double v_thresh = 0;
  double v_reset = 0;
  std::int32_t refractory_steps = 0;
};

/// Function table for one instruction set. Every entry has a scalar reference
/// implementation; vector variants must agree with it (bit-exactly for the
/// element-wise kernels, to rounding for the reductions).
struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// Number of differing bits between two packed bit vectors.
  std::uint64_t (*mismatch_count)(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  void (*cuba_step)(const CubaStep& args);
};

bool isa_available(Isa isa);

/// Table for a specific instruction set; throws if the host cannot run it.
const KernelTable& kernels_for(Isa isa);

/// Table selected at first use: the best available ISA, unless the
/// STPNET_SIMD environment variable names another one ("scalar", "avx2").
const KernelTable& kernels();

Isa active_isa();

/// Switch the process-wide table. Not synchronized with running kernels.
void set_active_isa(Isa isa);

}  // namespace stpnet::simd
