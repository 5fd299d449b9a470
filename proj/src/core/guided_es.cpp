#include "metricopt/guided_es.hpp"

#include <cmath>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

void GuidedESConfig::validate() const {
  if (k < 1) throw Error("guided ES: k must be >= 1");
  if (P < 1) throw Error("guided ES: P must be >= 1");
  if (!(s2 > 0.0)) throw Error("guided ES: s2 must be positive");
  if (!(lambda >= 0.0)) throw Error("guided ES: lambda must be non-negative");
}

GradientHistory::GradientHistory(std::size_t capacity, std::size_t dim)
    : slots_(capacity, std::vector<double>(dim, 0.0)), dim_(dim) {
  if (capacity == 0) throw Error("gradient history: capacity must be positive");
}

void GradientHistory::push(std::span<const double> grad) {
  if (grad.size() != dim_) throw ShapeError("gradient history: dimension mismatch");
  std::copy(grad.begin(), grad.end(), slots_[head_].begin());
  head_ = (head_ + 1) % slots_.size();
  if (count_ < slots_.size()) ++count_;
}

std::span<const double> GradientHistory::at(std::size_t i) const {
  if (i >= count_) throw Error("gradient history: index out of range");
  const std::size_t oldest = (head_ + slots_.size() - count_) % slots_.size();
  return slots_[(oldest + i) % slots_.size()];
}

SubspaceBasis orthonormal_basis(const GradientHistory& history) {
  SubspaceBasis basis;
  basis.dim = history.dim();
  const std::size_t d = basis.dim;
  std::vector<double> v(d);
  for (std::size_t i = 0; i < history.size(); ++i) {
    auto g = history.at(i);
    std::copy(g.begin(), g.end(), v.begin());
    const double norm0 = std::sqrt(simd::squared_norm(v));
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < basis.rank; ++j) {
        const auto q = basis.column(j);
        simd::axpy(-simd::dot(q, v), q, v);
      }
    }
    const double norm = std::sqrt(simd::squared_norm(v));
    if (norm < 1e-10 * std::max(1.0, norm0)) continue;
    simd::scale(1.0 / norm, v);
    basis.columns.insert(basis.columns.end(), v.begin(), v.end());
    ++basis.rank;
  }
  return basis;
}

std::vector<double> search_covariance(const SubspaceBasis& basis) {
  const std::size_t d = basis.dim;
  std::vector<double> sigma(d * d, 0.0);
  const double iso = basis.rank == 0 ? 1.0 / static_cast<double>(d) : 0.5 / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) sigma[i * d + i] = iso;
  if (basis.rank == 0) return sigma;
  const double sub = 0.5 / static_cast<double>(basis.rank);
  for (std::size_t j = 0; j < basis.rank; ++j) {
    const auto u = basis.column(j);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) sigma[a * d + b] += sub * u[a] * u[b];
    }
  }
  return sigma;
}

std::vector<std::vector<double>> sample_perturbations(const SubspaceBasis& basis,
                                                      const GuidedESConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = basis.dim;
  const double s = std::sqrt(cfg.s2);
  const double full_scale =
      basis.rank == 0 ? s * std::sqrt(1.0 / static_cast<double>(d))
                      : s * std::sqrt(1.0 / (2.0 * static_cast<double>(d)));
  const double sub_scale =
      basis.rank == 0 ? 0.0 : s * std::sqrt(1.0 / (2.0 * static_cast<double>(basis.rank)));
  std::vector<std::vector<double>> deltas(cfg.P);
  std::vector<double> eps_sub(basis.rank);
  for (auto& delta : deltas) {
    delta = normal_vector(d, full_scale, rng);
    fill_normal(eps_sub, 1.0, rng);
    for (std::size_t j = 0; j < basis.rank; ++j) {
      simd::axpy(sub_scale * eps_sub[j], basis.column(j), delta);
    }
  }
  return deltas;
}

std::vector<double> es_direction(const ValueQuery& f, std::span<const double> phi,
                                 const std::vector<std::vector<double>>& deltas, double s2) {
  if (deltas.empty()) throw Error("es_direction: no perturbations");
  if (!(s2 > 0.0)) throw Error("es_direction: s2 must be positive");
  const std::size_t d = phi.size();
  std::vector<double> u(d, 0.0);
  std::vector<double> plus(d), minus(d);
  const double coeff = 1.0 / (s2 * static_cast<double>(deltas.size()));
  for (const auto& delta : deltas) {
    if (delta.size() != d) throw ShapeError("es_direction: perturbation dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) {
      plus[i] = phi[i] + delta[i];
      minus[i] = phi[i] - delta[i];
    }
    const double fp = f(plus);
    const double fm = f(minus);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("es_direction: value function returned a non-finite value");
    }
    simd::axpy(coeff * (fp - fm), delta, u);
  }
  return u;
}

MetricOptState::MetricOptState(std::size_t dim, MetricOptConfig cfg, std::uint64_t seed)
    : config(std::move(cfg)),
      history(config.es.k, dim),
      adam(dim),
      velocity(dim, 0.0),
      rng(derive_seed(seed, "metricopt")) {
  config.es.validate();
}

StepInfo metricopt_step(MetricOptState& state, std::span<double> phi,
                        std::span<const double> loss_grad, const ValueQuery& f, double lr) {
  const std::size_t d = phi.size();
  if (loss_grad.size() != d || state.history.dim() != d) {
    throw ShapeError("metricopt_step: dimension mismatch");
  }
  const MetricOptConfig& cfg = state.config;
  StepInfo info;
  info.grad_norm = std::sqrt(simd::squared_norm(loss_grad));
  state.history.push(loss_grad);

  std::vector<double> direction;
  if (cfg.mode == CombineMode::loss_and_metric) {
    direction.assign(loss_grad.begin(), loss_grad.end());
  } else {
    direction.assign(d, 0.0);
  }
  if (cfg.es.lambda != 0.0) {
    const SubspaceBasis basis = orthonormal_basis(state.history);
    const auto deltas = sample_perturbations(basis, cfg.es, state.rng);
    const auto u = es_direction(f, phi, deltas, cfg.es.s2);
    info.queries = 2 * deltas.size();
    info.u_norm = std::sqrt(simd::squared_norm(u));
    simd::axpy(cfg.es.lambda, u, direction);
  }
  for (double v : direction) {
    if (!std::isfinite(v)) throw NumericError("metricopt_step: non-finite descent direction");
  }

  if (cfg.base == BaseOptimizer::adam) {
    adam_step(state.adam, phi, direction, lr, cfg.adam);
  } else if (cfg.momentum == 0.0) {
    sgd_step(phi, direction, lr);
  } else {
    for (std::size_t i = 0; i < d; ++i) state.velocity[i] = cfg.momentum * state.velocity[i] + direction[i];
    sgd_step(phi, state.velocity, lr);
  }
  ++state.step;
  return info;
}

}  // namespace metricopt
