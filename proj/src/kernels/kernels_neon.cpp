// SPDX-License-Identifier: Apache-2.0
#include "occaug/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace occaug::kernels {
namespace {

void select_u8(std::uint8_t* dst, const std::uint8_t* a, const std::uint8_t* b,
               const std::uint8_t* mask, std::size_t n) {
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t take_b = vtstq_u8(vld1q_u8(mask + i), vld1q_u8(mask + i));
    vst1q_u8(dst + i, vbslq_u8(take_b, vld1q_u8(b + i), vld1q_u8(a + i)));
  }
  for (; i < n; ++i) dst[i] = mask[i] ? b[i] : a[i];
}

void fill_masked_u8(std::uint8_t* dst, const std::uint8_t* src, const std::uint8_t* mask,
                    std::uint8_t value, std::size_t n) {
  const uint8x16_t fill = vdupq_n_u8(value);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t m = vld1q_u8(mask + i);
    vst1q_u8(dst + i, vbslq_u8(vtstq_u8(m, m), fill, vld1q_u8(src + i)));
  }
  for (; i < n; ++i) dst[i] = mask[i] ? value : src[i];
}

void or_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) vst1q_u8(dst + i, vorrq_u8(vld1q_u8(dst + i), vld1q_u8(src + i)));
  for (; i < n; ++i) dst[i] = static_cast<std::uint8_t>(dst[i] | src[i]);
}

void andnot_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  const uint8x16_t one = vdupq_n_u8(1);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t d = vld1q_u8(dst + i);
    const uint8x16_t s = vld1q_u8(src + i);
    const uint8x16_t keep = vbicq_u8(vtstq_u8(d, d), vtstq_u8(s, s));
    vst1q_u8(dst + i, vandq_u8(keep, one));
  }
  for (; i < n; ++i) dst[i] = (dst[i] && !src[i]) ? 1 : 0;
}

std::size_t count_u8(const std::uint8_t* src, std::size_t n) {
  const uint8x16_t one = vdupq_n_u8(1);
  std::size_t c = 0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t v = vld1q_u8(src + i);
    c += vaddvq_u8(vandq_u8(vtstq_u8(v, v), one));
  }
  for (; i < n; ++i) c += src[i] != 0;
  return c;
}

std::size_t and_count_u8(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  const uint8x16_t one = vdupq_n_u8(1);
  std::size_t c = 0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t va = vld1q_u8(a + i);
    const uint8x16_t vb = vld1q_u8(b + i);
    c += vaddvq_u8(vandq_u8(vandq_u8(vtstq_u8(va, va), vtstq_u8(vb, vb)), one));
  }
  for (; i < n; ++i) c += (a[i] != 0) & (b[i] != 0);
  return c;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f64(double* y, double alpha, const double* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_f64(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
    acc1 = vaddq_f64(acc1, vld1q_f64(x + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

constexpr KernelTable kNeon{Isa::Neon, select_u8, fill_masked_u8, or_u8,   andnot_u8,
                            count_u8,  and_count_u8, dot_f64,     axpy_f64, sum_f64};

}  // namespace

namespace detail {
const KernelTable* neon_table() { return &kNeon; }
}  // namespace detail

}  // namespace occaug::kernels

#else

namespace occaug::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace occaug::kernels::detail

#endif
