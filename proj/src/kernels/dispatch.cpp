// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "occaug/error.hpp"
#include "occaug/kernels.hpp"

namespace occaug::kernels {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable* best_available() {
  if (const char* env = std::getenv("OCCAUG_ISA"); env != nullptr && *env != '\0') {
    const Isa forced = parse_isa(env);
    return &table(forced);
  }
  if (cpu_supports(Isa::Avx2)) return detail::avx2_table();
  if (cpu_supports(Isa::Neon)) return detail::neon_table();
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{best_available()};
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "neon") return Isa::Neon;
  throw CapabilityError("unknown kernel ISA '" + std::string(name) + "' (expected scalar|avx2|neon)");
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::Scalar};
  for (Isa isa : {Isa::Avx2, Isa::Neon})
    if (cpu_supports(isa)) out.push_back(isa);
  return out;
}

const KernelTable& table(Isa isa) {
  if (!cpu_supports(isa))
    throw CapabilityError("kernel ISA '" + std::string(isa_name(isa)) +
                          "' is not available on this CPU/build");
  switch (isa) {
    case Isa::Avx2:
      return *detail::avx2_table();
    case Isa::Neon:
      return *detail::neon_table();
    case Isa::Scalar:
      break;
  }
  return detail::scalar_table();
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&table(isa), std::memory_order_release); }

}  // namespace occaug::kernels
