#include <cstdlib>
#include <string>

#include "metricopt/simd.hpp"

namespace metricopt::simd {

#if defined(METRICOPT_HAVE_AVX2)
const Kernels& avx2_table();
#endif
#if defined(METRICOPT_HAVE_NEON)
const Kernels& neon_table();
#endif

const Kernels* avx2_kernels() {
#if defined(METRICOPT_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const Kernels* neon_kernels() {
#if defined(METRICOPT_HAVE_NEON)
  // Advanced SIMD is mandatory on AArch64.
  return &neon_table();
#else
  return nullptr;
#endif
}

namespace {

const Kernels& select() {
  const char* env = std::getenv("METRICOPT_SIMD");
  const std::string request = env ? env : "auto";
  if (request == "scalar") return scalar_kernels();
  if (request == "avx2") return avx2_kernels() ? *avx2_kernels() : scalar_kernels();
  if (request == "neon") return neon_kernels() ? *neon_kernels() : scalar_kernels();
  if (const Kernels* k = avx2_kernels()) return *k;
  if (const Kernels* k = neon_kernels()) return *k;
  return scalar_kernels();
}

}  // namespace

const Kernels& active() {
  static const Kernels& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

}  // namespace metricopt::simd
