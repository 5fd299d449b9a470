#include "metricopt/optim.hpp"

#include <cmath>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

namespace {

void check_sizes(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: gradient size mismatch");
}

void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("optimizer produced a non-finite parameter");
  }
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  check_sizes(params, grads);
  if (!(lr > 0.0)) throw Error("sgd: learning rate must be positive");
  simd::axpy(-lr, grads, params);
  require_finite(params);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr, const AdamConfig& cfg) {
  check_sizes(params, grads);
  if (!(lr > 0.0)) throw Error("adam: learning rate must be positive");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam: state size mismatch");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  require_finite(params);
}

}  // namespace metricopt
