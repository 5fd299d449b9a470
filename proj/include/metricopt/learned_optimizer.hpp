#pragma once

// MLP optimizer m(grad, grad_avg, phi, loss, dloss, metric, dmetric) ->
// (alpha, u) with phi_{t+1} = phi_t + alpha u, applied coordinate-wise:
// every coordinate i sees [grad_i, grad_avg_i, phi_i, loss, dloss, M, dM]
// and emits (u_i, a_i); alpha = 1e-3 * exp(mean_i a_i), with the exponent capped.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metricopt/guided_es.hpp"
#include "metricopt/mlp.hpp"
#include "metricopt/rng.hpp"

namespace metricopt {

inline constexpr std::size_t kCoordinateFeatures = 7;
inline constexpr double kAlphaBase = 1e-3;
inline constexpr double kFeatureDecay = 0.9;
// mean_i a_i is capped here before exponentiation, so alpha <= 1e-3 e^7 ~ 1.1.
inline constexpr double kMaxLogStep = 7.0;

MLPSpec learned_optimizer_spec(std::size_t hidden = 32);
ModelWeights init_learned_optimizer(Rng& rng, std::size_t hidden = 32);

// Running averages behind the relative-change features. The first call
// seeds every average with the current value, so dloss = dmetric = 0 there.
struct FeatureState {
  std::vector<double> grad_avg;
  double loss_avg = 0.0;
  double metric_avg = 0.0;
  std::size_t step = 0;
};

// Flat layout [grad (d), grad_avg (d), phi (d), loss, dloss, metric, dmetric],
// 3d + 4 entries. `loss` should already be scale-normalized.
std::vector<double> assemble_features(FeatureState& state, std::span<const double> grad,
                                      std::span<const double> phi, double loss, double metric);

struct LearnedUpdate {
  double alpha;
  std::vector<double> direction;
};

LearnedUpdate learned_opt_step(const ModelWeights& w_opt, std::span<const double> features);

// L_opt = lambda L_metric + L_loss over a trajectory phi_0..phi_T:
//   L_metric = 1/T sum_t softplus(beta (M_t - M_t') / M_t), t' = argmin_{i<t} M_i
//   L_loss   = 1/T sum_t log(l_t + eps) - log(l_0 + eps)
// `metric` and `loss` hold T + 1 entries. beta <= 0 selects T/2. M_t is
// floored at 1e-4 before the division.
double loss_learned_optimizer(std::span<const double> metric, std::span<const double> loss,
                              double lambda = 50.0, double beta = 0.0, double eps = 1e-8);

// A finetuning problem the optimizer can be unrolled on. `loss_grad` must be
// deterministic in (step, phi) so antithetic pairs see the same batches.
struct UnrollProblem {
  std::vector<double> phi0;
  std::size_t horizon = 0;
  std::function<double(std::size_t step, std::span<const double> phi, std::span<double> grad)>
      loss_grad;
};

struct UnrollResult {
  std::vector<std::vector<double>> phi;  // T + 1 iterates
  std::vector<double> metric;            // f(phi_t)
  std::vector<double> loss;
  double objective = 0.0;
};

// Throws NumericError if the unrolled trajectory diverges.
UnrollResult unroll_learned_optimizer(const ModelWeights& w_opt, const UnrollProblem& problem,
                                      const ValueQuery& f, double lambda = 50.0);

// Antithetic estimate of grad E[L(w + sigma xi)]:
//   mean over pairs of (L(w + sigma xi) - L(w - sigma xi)) xi / (2 sigma).
// Pairs with a non-finite or throwing evaluation are discarded. Returns an
// all-zero vector when every pair is discarded.
std::vector<double> es_gradient(const std::function<double(std::span<const double>)>& objective,
                                std::span<const double> w, double sigma, std::size_t pairs,
                                Rng& rng, std::size_t* used_pairs = nullptr);

struct LearnedOptTrainConfig {
  std::size_t iterations = 200;
  std::size_t pairs = 8;
  double variance = 0.01;  // smoothing variance of the perturbed weights
  double lr = 0.01;        // Adam
  double lambda = 50.0;
};

using UnrollSampler = std::function<UnrollProblem(std::uint64_t seed)>;

// One ES gradient estimate on a freshly sampled problem, then one Adam update.
void learned_optimizer_es_step(ModelWeights& w_opt, AdamState& adam, const UnrollProblem& problem,
                               const ValueQuery& f, const LearnedOptTrainConfig& cfg, Rng& rng);

ModelWeights train_learned_optimizer(ModelWeights w_opt, const UnrollSampler& sampler,
                                     const ValueQuery& f, const LearnedOptTrainConfig& cfg,
                                     std::uint64_t seed);

}  // namespace metricopt
