// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "occaug/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace occaug::kernels {
namespace {

inline __m256i load(const std::uint8_t* p) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p));
}
inline void store(std::uint8_t* p, __m256i v) {
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(p), v);
}
inline __m256i is_zero(__m256i v) { return _mm256_cmpeq_epi8(v, _mm256_setzero_si256()); }

// Horizontal sum of the four 64-bit lanes produced by _mm256_sad_epu8.
inline std::size_t hsum_epi64(__m256i v) {
  const __m128i s = _mm_add_epi64(_mm256_castsi256_si128(v), _mm256_extracti128_si256(v, 1));
  return static_cast<std::size_t>(_mm_cvtsi128_si64(s) + _mm_extract_epi64(s, 1));
}

inline double hsum_pd(__m256d v) {
  const __m128d s = _mm_add_pd(_mm256_castpd256_pd128(v), _mm256_extractf128_pd(v, 1));
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void select_u8(std::uint8_t* dst, const std::uint8_t* a, const std::uint8_t* b,
               const std::uint8_t* mask, std::size_t n) {
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i keep = is_zero(load(mask + i));
    store(dst + i, _mm256_blendv_epi8(load(b + i), load(a + i), keep));
  }
  for (; i < n; ++i) dst[i] = mask[i] ? b[i] : a[i];
}

void fill_masked_u8(std::uint8_t* dst, const std::uint8_t* src, const std::uint8_t* mask,
                    std::uint8_t value, std::size_t n) {
  const __m256i fill = _mm256_set1_epi8(static_cast<char>(value));
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i keep = is_zero(load(mask + i));
    store(dst + i, _mm256_blendv_epi8(fill, load(src + i), keep));
  }
  for (; i < n; ++i) dst[i] = mask[i] ? value : src[i];
}

void or_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) store(dst + i, _mm256_or_si256(load(dst + i), load(src + i)));
  for (; i < n; ++i) dst[i] = static_cast<std::uint8_t>(dst[i] | src[i]);
}

void andnot_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  const __m256i one = _mm256_set1_epi8(1);
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i keep = _mm256_andnot_si256(is_zero(load(dst + i)), is_zero(load(src + i)));
    store(dst + i, _mm256_and_si256(keep, one));
  }
  for (; i < n; ++i) dst[i] = (dst[i] && !src[i]) ? 1 : 0;
}

std::size_t count_u8(const std::uint8_t* src, std::size_t n) {
  const __m256i one = _mm256_set1_epi8(1);
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i nz = _mm256_andnot_si256(is_zero(load(src + i)), one);
    acc = _mm256_add_epi64(acc, _mm256_sad_epu8(nz, _mm256_setzero_si256()));
  }
  std::size_t c = hsum_epi64(acc);
  for (; i < n; ++i) c += src[i] != 0;
  return c;
}

std::size_t and_count_u8(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  const __m256i one = _mm256_set1_epi8(1);
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i either_zero = _mm256_or_si256(is_zero(load(a + i)), is_zero(load(b + i)));
    const __m256i both = _mm256_andnot_si256(either_zero, one);
    acc = _mm256_add_epi64(acc, _mm256_sad_epu8(both, _mm256_setzero_si256()));
  }
  std::size_t c = hsum_epi64(acc);
  for (; i < n; ++i) c += (a[i] != 0) & (b[i] != 0);
  return c;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f64(double* y, double alpha, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_f64(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double s = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

constexpr KernelTable kAvx2{Isa::Avx2, select_u8, fill_masked_u8, or_u8,   andnot_u8,
                            count_u8,  and_count_u8, dot_f64,     axpy_f64, sum_f64};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &kAvx2; }
}  // namespace detail

}  // namespace occaug::kernels

#else

namespace occaug::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace occaug::kernels::detail

#endif
