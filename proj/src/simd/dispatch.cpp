#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace stpnet::simd {

namespace {

constexpr KernelTable kScalarTable{Isa::Scalar,
                                   &scalar::dot,
                                   &scalar::axpy,
                                   &scalar::mismatch_count,
                                   &scalar::squared_distance,
                                   &scalar::cuba_step};

#ifdef STPNET_HAVE_AVX2
constexpr KernelTable kAvx2Table{Isa::Avx2,
                                 &avx2::dot,
                                 &avx2::axpy,
                                 &avx2::mismatch_count,
                                 &avx2::squared_distance,
                                 &avx2::cuba_step};
#endif

Isa detect_best() {
  if (isa_available(Isa::Avx2)) return Isa::Avx2;
  return Isa::Scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("STPNET_SIMD")) {
    const std::string name(env);
    if (name == "scalar") return Isa::Scalar;
    if (name == "avx2" && isa_available(Isa::Avx2)) return Isa::Avx2;
  }
  return detect_best();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels_for(initial_isa())};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(STPNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) throw std::runtime_error("instruction set not available: " + std::string(isa_name(isa)));
  switch (isa) {
    case Isa::Scalar:
      return kScalarTable;
    case Isa::Avx2:
#ifdef STPNET_HAVE_AVX2
      return kAvx2Table;
#else
      break;
#endif
  }
  return kScalarTable;
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) { active_table().store(&kernels_for(isa), std::memory_order_relaxed); }

}  // namespace stpnet::simd
