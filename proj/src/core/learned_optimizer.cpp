#include "metricopt/learned_optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "metricopt/error.hpp"
#include "metricopt/metrics.hpp"
#include "metricopt/optim.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

MLPSpec learned_optimizer_spec(std::size_t hidden) {
  return make_spec({kCoordinateFeatures, hidden, hidden, 2}, Activation::relu, false);
}

ModelWeights init_learned_optimizer(Rng& rng, std::size_t hidden) {
  return init_weights(learned_optimizer_spec(hidden), rng);
}

std::vector<double> assemble_features(FeatureState& state, std::span<const double> grad,
                                      std::span<const double> phi, double loss, double metric) {
  const std::size_t d = phi.size();
  if (grad.size() != d) throw ShapeError("learned optimizer: gradient/phi size mismatch");
  if (state.step == 0) {
    state.grad_avg.assign(grad.begin(), grad.end());
    state.loss_avg = loss;
    state.metric_avg = metric;
  } else {
    if (state.grad_avg.size() != d) throw ShapeError("learned optimizer: feature state size");
    for (std::size_t i = 0; i < d; ++i) {
      state.grad_avg[i] = kFeatureDecay * state.grad_avg[i] + (1.0 - kFeatureDecay) * grad[i];
    }
  }
  const double dloss = (loss - state.loss_avg) / (std::abs(state.loss_avg) + 1e-8);
  const double dmetric = (metric - state.metric_avg) / (std::abs(state.metric_avg) + 1e-8);
  if (state.step > 0) {
    state.loss_avg = kFeatureDecay * state.loss_avg + (1.0 - kFeatureDecay) * loss;
    state.metric_avg = kFeatureDecay * state.metric_avg + (1.0 - kFeatureDecay) * metric;
  }
  ++state.step;

  std::vector<double> features;
  features.reserve(3 * d + 4);
  features.insert(features.end(), grad.begin(), grad.end());
  features.insert(features.end(), state.grad_avg.begin(), state.grad_avg.end());
  features.insert(features.end(), phi.begin(), phi.end());
  features.push_back(loss);
  features.push_back(dloss);
  features.push_back(metric);
  features.push_back(dmetric);
  return features;
}

LearnedUpdate learned_opt_step(const ModelWeights& w_opt, std::span<const double> features) {
  if (features.size() < 4 || (features.size() - 4) % 3 != 0) {
    throw ShapeError("learned optimizer: feature vector must have 3d + 4 entries");
  }
  const std::size_t d = (features.size() - 4) / 3;
  if (w_opt.spec().input_dim() != kCoordinateFeatures || w_opt.spec().output_dim() != 2) {
    throw ShapeError("learned optimizer: network must map 7 features to 2 outputs");
  }
  Tensor x = Tensor::matrix(d, kCoordinateFeatures);
  const auto scalars = features.subspan(3 * d);
  for (std::size_t i = 0; i < d; ++i) {
    x(i, 0) = features[i];
    x(i, 1) = features[d + i];
    x(i, 2) = features[2 * d + i];
    for (std::size_t s = 0; s < 4; ++s) x(i, 3 + s) = scalars[s];
  }
  const Tensor out = forward(w_opt, x, Mode::eval);
  LearnedUpdate update;
  update.direction.resize(d);
  double mean_a = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    update.direction[i] = out(i, 0);
    mean_a += out(i, 1);
  }
  mean_a /= static_cast<double>(d);
  if (std::isnan(mean_a)) throw NumericError("learned optimizer: step size is NaN");
  update.alpha = kAlphaBase * std::exp(std::min(mean_a, kMaxLogStep));
  return update;
}

double loss_learned_optimizer(std::span<const double> metric, std::span<const double> loss,
                              double lambda, double beta, double eps) {
  if (metric.size() != loss.size() || metric.size() < 2) {
    throw ShapeError("learned optimizer loss: need T + 1 >= 2 matching entries");
  }
  const std::size_t T = metric.size() - 1;
  if (beta <= 0.0) beta = static_cast<double>(T) / 2.0;
  constexpr double kMetricFloor = 1e-4;
  double l_metric = 0.0;
  double l_loss = 0.0;
  double best = metric[0];
  const double log_l0 = std::log(loss[0] + eps);
  for (std::size_t t = 1; t <= T; ++t) {
    const double m = std::max(metric[t], kMetricFloor);
    const double x = beta * (metric[t] - best) / m;
    l_metric += x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    l_loss += std::log(loss[t] + eps) - log_l0;
    best = std::min(best, metric[t]);
  }
  const double total = lambda * l_metric / static_cast<double>(T) + l_loss / static_cast<double>(T);
  return total;
}

UnrollResult unroll_learned_optimizer(const ModelWeights& w_opt, const UnrollProblem& problem,
                                      const ValueQuery& f, double lambda) {
  if (problem.horizon == 0) throw Error("unroll: horizon must be positive");
  const std::size_t d = problem.phi0.size();
  UnrollResult r;
  std::vector<double> phi = problem.phi0;
  std::vector<double> grad(d);
  FeatureState features;
  for (std::size_t t = 0; t <= problem.horizon; ++t) {
    const double loss = problem.loss_grad(t, phi, grad);
    const double metric = f(phi);
    if (!std::isfinite(loss) || !std::isfinite(metric)) {
      throw NumericError("unroll: trajectory diverged");
    }
    r.phi.push_back(phi);
    r.loss.push_back(loss);
    r.metric.push_back(metric);
    if (t == problem.horizon) break;
    const auto feat = assemble_features(features, grad, phi, normalize_loss(loss), metric);
    const LearnedUpdate up = learned_opt_step(w_opt, feat);
    simd::axpy(up.alpha, up.direction, phi);
    for (double v : phi) {
      if (!std::isfinite(v)) throw NumericError("unroll: parameters diverged");
    }
  }
  r.objective = loss_learned_optimizer(r.metric, r.loss, lambda);
  return r;
}

std::vector<double> es_gradient(const std::function<double(std::span<const double>)>& objective,
                                std::span<const double> w, double sigma, std::size_t pairs,
                                Rng& rng, std::size_t* used_pairs) {
  if (!(sigma > 0.0)) throw Error("es_gradient: sigma must be positive");
  const std::size_t n = w.size();
  std::vector<double> grad(n, 0.0);
  std::vector<double> xi(n), plus(n), minus(n);
  std::size_t used = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    fill_normal(xi, 1.0, rng);
    for (std::size_t i = 0; i < n; ++i) {
      plus[i] = w[i] + sigma * xi[i];
      minus[i] = w[i] - sigma * xi[i];
    }
    double lp, lm;
    try {
      lp = objective(plus);
      lm = objective(minus);
    } catch (const NumericError&) {
      continue;
    }
    if (!std::isfinite(lp) || !std::isfinite(lm)) continue;
    simd::axpy((lp - lm) / (2.0 * sigma), xi, grad);
    ++used;
  }
  if (used > 0) simd::scale(1.0 / static_cast<double>(used), grad);
  if (used_pairs) *used_pairs = used;
  return grad;
}

void learned_optimizer_es_step(ModelWeights& w_opt, AdamState& adam, const UnrollProblem& problem,
                               const ValueQuery& f, const LearnedOptTrainConfig& cfg, Rng& rng) {
  ModelWeights probe = w_opt;
  auto objective = [&](std::span<const double> params) {
    std::copy(params.begin(), params.end(), probe.params().begin());
    return unroll_learned_optimizer(probe, problem, f, cfg.lambda).objective;
  };
  std::size_t used = 0;
  const auto grad = es_gradient(objective, w_opt.params(), std::sqrt(cfg.variance), cfg.pairs,
                                rng, &used);
  if (used == 0) return;
  adam_step(adam, w_opt.params(), grad, cfg.lr);
}

ModelWeights train_learned_optimizer(ModelWeights w_opt, const UnrollSampler& sampler,
                                     const ValueQuery& f, const LearnedOptTrainConfig& cfg,
                                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, "learned-opt/es"));
  AdamState adam(w_opt.params().size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const UnrollProblem problem = sampler(derive_seed(seed, "learned-opt/task", it));
    learned_optimizer_es_step(w_opt, adam, problem, f, cfg, rng);
  }
  return w_opt;
}

}  // namespace metricopt
