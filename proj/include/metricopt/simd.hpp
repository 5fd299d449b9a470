#pragma once

// Dense double-precision kernels with a scalar reference path and
// vectorized variants picked once at runtime.
//
// Selection order: METRICOPT_SIMD environment variable ("scalar", "avx2",
// "neon", "auto"), then CPU detection. A request for an ISA that is not
// compiled in or not supported by the CPU falls back to scalar.

#include <cstddef>
#include <span>
#include <string_view>

namespace metricopt::simd {

enum class Isa { scalar, avx2, neon };

struct Kernels {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x[i] *= a
  void (*scale)(double a, double* x, std::size_t n);
};

const Kernels& scalar_kernels();
// nullptr when the variant is not built for this target or the CPU lacks it.
const Kernels* avx2_kernels();
const Kernels* neon_kernels();

// Kernel table used by the library. Fixed for the lifetime of the process.
const Kernels& active();

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline void scale(double a, std::span<double> x) {
  active().scale(a, x.data(), x.size());
}

inline double squared_norm(std::span<const double> x) { return dot(x, x); }

}  // namespace metricopt::simd
