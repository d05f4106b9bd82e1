// SPDX-License-Identifier: Apache-2.0
#include "occaug/kernels.hpp"

namespace occaug::kernels {
namespace {

void select_u8(std::uint8_t* dst, const std::uint8_t* a, const std::uint8_t* b,
               const std::uint8_t* mask, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = mask[i] ? b[i] : a[i];
}

void fill_masked_u8(std::uint8_t* dst, const std::uint8_t* src, const std::uint8_t* mask,
                    std::uint8_t value, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = mask[i] ? value : src[i];
}

void or_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<std::uint8_t>(dst[i] | src[i]);
}

void andnot_u8(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = (dst[i] && !src[i]) ? 1 : 0;
}

std::size_t count_u8(const std::uint8_t* src, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += src[i] != 0;
  return c;
}

std::size_t and_count_u8(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += (a[i] != 0) & (b[i] != 0);
  return c;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f64(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_f64(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

constexpr KernelTable kScalar{Isa::Scalar, select_u8, fill_masked_u8, or_u8,   andnot_u8,
                              count_u8,    and_count_u8, dot_f64,     axpy_f64, sum_f64};

}  // namespace

namespace detail {
const KernelTable& scalar_table() { return kScalar; }
}  // namespace detail

}  // namespace occaug::kernels
