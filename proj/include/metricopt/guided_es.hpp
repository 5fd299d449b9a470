#pragma once

// Value-function-guided evolutionary search around recent loss gradients.
//
// Search covariance  Sigma = I/(2d) + U U^T/(2k)  with U an orthonormal basis
// of the last k loss gradients; antithetic estimate of the descent direction
//   u = 1/(s^2 P) sum_i delta_i [f(phi + delta_i) - f(phi - delta_i)],
// delta_i ~ N(0, s^2 Sigma).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metricopt/optim.hpp"
#include "metricopt/rng.hpp"

namespace metricopt {

struct GuidedESConfig {
  std::size_t k = 3;   // subspace size
  std::size_t P = 3;   // antithetic pairs
  double s2 = 0.01;    // search variance
  double lambda = 1.0; // weight of the metric direction
  void validate() const;
};

// Ring buffer of the most recent k gradients.
class GradientHistory {
 public:
  GradientHistory(std::size_t capacity, std::size_t dim);
  void push(std::span<const double> grad);
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return slots_.size(); }
  std::size_t dim() const { return dim_; }
  // i = 0 is the oldest stored gradient.
  std::span<const double> at(std::size_t i) const;

 private:
  std::vector<std::vector<double>> slots_;
  std::size_t dim_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct SubspaceBasis {
  std::size_t dim = 0;
  std::size_t rank = 0;          // k_eff
  std::vector<double> columns;   // rank contiguous unit columns of length dim
  std::span<const double> column(std::size_t j) const { return {columns.data() + j * dim, dim}; }
};

// Gram-Schmidt (two passes); columns whose residual norm falls below
// 1e-10 * max(1, |g|) are dropped, so an all-zero history has rank 0.
SubspaceBasis orthonormal_basis(const GradientHistory& history);

// Dense Sigma (row-major d x d). rank 0 gives the isotropic I/d.
std::vector<double> search_covariance(const SubspaceBasis& basis);

// delta = s (sqrt(1/(2d)) e_full + sqrt(1/(2 k_eff)) U e_sub); with k_eff = 0
// delta = s sqrt(1/d) e_full. Trace of the covariance is s^2 either way.
std::vector<std::vector<double>> sample_perturbations(const SubspaceBasis& basis,
                                                      const GuidedESConfig& cfg, Rng& rng);

using ValueQuery = std::function<double(std::span<const double>)>;

// 2P queries of f. Throws NumericError on a non-finite f value.
std::vector<double> es_direction(const ValueQuery& f, std::span<const double> phi,
                                 const std::vector<std::vector<double>>& deltas, double s2);

enum class BaseOptimizer { sgd, adam };
enum class CombineMode {
  loss_and_metric,  // g = grad_loss + lambda u
  metric_only,      // g = lambda u
};

struct MetricOptConfig {
  GuidedESConfig es;
  BaseOptimizer base = BaseOptimizer::sgd;
  double momentum = 0.0;  // sgd only
  AdamConfig adam;
  CombineMode mode = CombineMode::loss_and_metric;
};

struct MetricOptState {
  MetricOptState(std::size_t dim, MetricOptConfig cfg, std::uint64_t seed);

  MetricOptConfig config;
  GradientHistory history;
  AdamState adam;
  std::vector<double> velocity;
  std::size_t step = 0;
  Rng rng;
};

struct StepInfo {
  double grad_norm = 0.0;
  double u_norm = 0.0;
  std::size_t queries = 0;
};

// Pushes loss_grad into the history, estimates u with the value function and
// hands the combined direction to the base optimizer. With lambda == 0 no
// random numbers are drawn and f is never called, so the iterates equal the
// base optimizer's.
StepInfo metricopt_step(MetricOptState& state, std::span<double> phi,
                        std::span<const double> loss_grad, const ValueQuery& f, double lr);

}  // namespace metricopt
