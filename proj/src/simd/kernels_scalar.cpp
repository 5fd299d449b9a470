#include "metricopt/simd.hpp"

namespace metricopt::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{Isa::scalar, &dot_scalar, &axpy_scalar, &scale_scalar};
  return table;
}

}  // namespace metricopt::simd
