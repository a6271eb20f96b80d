// Compiled with -mavx2 -mpopcnt; only reached after a runtime CPU check.
#include <immintrin.h>

#include <bit>

#include "kernels_impl.hpp"

namespace stpnet::simd::avx2 {

namespace {

double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

// Per-byte popcount via a nibble lookup table, summed into 64-bit lanes.
__m256i popcount_epi64(__m256i v) {
  const __m256i lookup = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,
                                          0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
  const __m256i low_mask = _mm256_set1_epi8(0x0f);
  const __m256i lo = _mm256_and_si256(v, low_mask);
  const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low_mask);
  const __m256i counts = _mm256_add_epi8(_mm256_shuffle_epi8(lookup, lo), _mm256_shuffle_epi8(lookup, hi));
  return _mm256_sad_epu8(counts, _mm256_setzero_si256());
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double acc = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

std::uint64_t mismatch_count(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 4 <= words; i += 4) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    acc = _mm256_add_epi64(acc, popcount_epi64(_mm256_xor_si256(va, vb)));
  }
  alignas(32) std::uint64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
  std::uint64_t count = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < words; ++i) count += static_cast<std::uint64_t>(std::popcount(a[i] ^ b[i]));
  return count;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double sum = horizontal_sum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void cuba_step(const CubaStep& s) {
  const __m256d syn_decay = _mm256_set1_pd(s.syn_decay);
  const __m256d mem_decay = _mm256_set1_pd(s.mem_decay);
  const __m256d inv_gl = _mm256_set1_pd(s.inv_g_leak);
  const __m256d thresh = _mm256_set1_pd(s.v_thresh);
  const __m256d reset = _mm256_set1_pd(s.v_reset);
  const __m128i one = _mm_set1_epi32(1);
  const __m128i zero = _mm_setzero_si128();
  const __m128i reload = _mm_set1_epi32(s.refractory_steps);

  std::size_t k = 0;
  for (; k + 4 <= s.n; k += 4) {
    const __m128i r = _mm_loadu_si128(reinterpret_cast<const __m128i*>(s.refractory + k));
    const __m128i held_i = _mm_cmpgt_epi32(r, one);
    const __m128i ending_i = _mm_cmpeq_epi32(r, one);
    const __m256d held = _mm256_castsi256_pd(_mm256_cvtepi32_epi64(held_i));
    const __m256d ending = _mm256_castsi256_pd(_mm256_cvtepi32_epi64(ending_i));

    const __m256d u = _mm256_loadu_pd(s.u + k);
    const __m256d cur = _mm256_loadu_pd(s.current + k);
    const __m256d start = _mm256_blendv_pd(u, reset, ending);
    const __m256d drive = _mm256_add_pd(cur, _mm256_loadu_pd(s.external + k));
    const __m256d u_inf = _mm256_add_pd(_mm256_loadu_pd(s.e_leak + k), _mm256_mul_pd(drive, inv_gl));
    const __m256d next = _mm256_add_pd(u_inf, _mm256_mul_pd(_mm256_sub_pd(start, u_inf), mem_decay));

    const __m256d crossed = _mm256_andnot_pd(held, _mm256_cmp_pd(next, thresh, _CMP_GE_OQ));
    const __m256d u_new = _mm256_blendv_pd(next, reset, _mm256_or_pd(crossed, held));
    _mm256_storeu_pd(s.u + k, u_new);
    _mm256_storeu_pd(s.current + k, _mm256_mul_pd(cur, syn_decay));

    // Refractory bookkeeping in the integer domain.
    const int spike_bits = _mm256_movemask_pd(crossed);
    const __m128i spike_i = _mm_setr_epi32(-(spike_bits & 1), -((spike_bits >> 1) & 1),
                                           -((spike_bits >> 2) & 1), -((spike_bits >> 3) & 1));
    __m128i r_new = _mm_blendv_epi8(zero, _mm_sub_epi32(r, one), held_i);
    r_new = _mm_blendv_epi8(r_new, reload, spike_i);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(s.refractory + k), r_new);
    for (int lane = 0; lane < 4; ++lane) s.spiked[k + lane] = static_cast<std::uint8_t>((spike_bits >> lane) & 1);
  }
  if (k < s.n) {
    CubaStep tail = s;
    tail.n = s.n - k;
    tail.u += k;
    tail.current += k;
    tail.e_leak += k;
    tail.external += k;
    tail.refractory += k;
    tail.spiked += k;
    scalar::cuba_step(tail);
  }
}

}  // namespace stpnet::simd::avx2
