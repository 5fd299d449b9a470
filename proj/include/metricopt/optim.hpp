#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metricopt/mlp.hpp"

namespace metricopt {

// params -= lr * grads
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr, const AdamConfig& cfg = {});

inline void sgd_step(ModelWeights& weights, const Gradients& grads, double lr) {
  sgd_step(weights.params(), grads.params, lr);
}

inline void adam_step(AdamState& state, ModelWeights& weights, const Gradients& grads, double lr,
                      const AdamConfig& cfg = {}) {
  adam_step(state, weights.params(), grads.params, lr, cfg);
}

}  // namespace metricopt
