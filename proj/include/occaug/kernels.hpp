// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops used by masks, augmenters, and the dense layers.
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on AArch64). The active variant is chosen once at
// startup from the CPU's capabilities; OCCAUG_ISA=scalar|avx2|neon overrides
// the choice. Byte kernels are bit-identical across variants; floating-point
// reductions may differ in the last bits because summation order differs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace occaug::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

struct KernelTable {
  Isa isa;
  // dst[i] = mask[i] ? b[i] : a[i]; mask bytes are 0 or 1.
  void (*select_u8)(std::uint8_t* dst, const std::uint8_t* a, const std::uint8_t* b,
                    const std::uint8_t* mask, std::size_t n);
  // dst[i] = mask[i] ? value : src[i]
  void (*fill_masked_u8)(std::uint8_t* dst, const std::uint8_t* src, const std::uint8_t* mask,
                         std::uint8_t value, std::size_t n);
  // dst[i] |= src[i]
  void (*or_u8)(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
  // dst[i] &= !src[i]
  void (*andnot_u8)(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
  // number of nonzero bytes
  std::size_t (*count_u8)(const std::uint8_t* src, std::size_t n);
  // number of i with a[i] && b[i]
  std::size_t (*and_count_u8)(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy_f64)(double* y, double alpha, const double* x, std::size_t n);
  double (*sum_f64)(const double* x, std::size_t n);
};

// Tables compiled into this binary and supported by the running CPU.
// Scalar is always first.
std::vector<Isa> available_isas();

// Throws occaug::CapabilityError if the ISA is not available.
const KernelTable& table(Isa isa);

const KernelTable& active();
void set_active(Isa isa);

// Convenience wrappers over active().

inline void select_u8(std::span<std::uint8_t> dst, std::span<const std::uint8_t> a,
                      std::span<const std::uint8_t> b, std::span<const std::uint8_t> mask) {
  active().select_u8(dst.data(), a.data(), b.data(), mask.data(), dst.size());
}

inline void fill_masked_u8(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src,
                           std::span<const std::uint8_t> mask, std::uint8_t value) {
  active().fill_masked_u8(dst.data(), src.data(), mask.data(), value, dst.size());
}

inline void or_u8(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  active().or_u8(dst.data(), src.data(), dst.size());
}

inline void andnot_u8(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  active().andnot_u8(dst.data(), src.data(), dst.size());
}

inline std::size_t count_u8(std::span<const std::uint8_t> src) {
  return active().count_u8(src.data(), src.size());
}

inline std::size_t and_count_u8(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return active().and_count_u8(a.data(), b.data(), a.size());
}

inline double dot_f64(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}

inline void axpy_f64(std::span<double> y, double alpha, std::span<const double> x) {
  active().axpy_f64(y.data(), alpha, x.data(), y.size());
}

inline double sum_f64(std::span<const double> x) { return active().sum_f64(x.data(), x.size()); }

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace occaug::kernels
