#pragma once

#include "stpnet/simd/kernels.hpp"

namespace stpnet::simd {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
std::uint64_t mismatch_count(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);
double squared_distance(const double* a, const double* b, std::size_t n);
void cuba_step(const CubaStep& s);
}  // namespace scalar

#ifdef STPNET_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
std::uint64_t mismatch_count(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);
double squared_distance(const double* a, const double* b, std::size_t n);
void cuba_step(const CubaStep& s);
}  // namespace avx2
#endif

}  // namespace stpnet::simd
