#include "metricopt/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

double rbf_kernel(double a, double b, const RBFParams& params) {
  const double d = (a - b) / params.length_scale;
  return params.signal_var * std::exp(-0.5 * d * d);
}

namespace {

void check(std::span<const Observation> obs, const RBFParams& params) {
  if (obs.empty()) throw Error("gp: no observations");
  if (!(params.length_scale > 0.0 && params.signal_var > 0.0 && params.noise_var > 0.0 &&
        params.jitter > 0.0)) {
    throw Error("gp: RBF parameters must be positive");
  }
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (!(obs[i].step > obs[i - 1].step)) throw Error("gp: observation steps must increase");
  }
}

// Lower-triangular Cholesky factor, row-major n x n.
struct Cholesky {
  std::size_t n = 0;
  std::vector<double> l;

  // Solves L x = b in place.
  void forward_solve(std::span<double> b) const {
    const auto& k = simd::active();
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = (b[i] - k.dot(l.data() + i * n, b.data(), i)) / l[i * n + i];
    }
  }
  // Solves L^T x = b in place.
  void backward_solve(std::span<double> b) const {
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= l[j * n + i] * b[j];
      b[i] = s / l[i * n + i];
    }
  }
  double log_det() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::log(l[i * n + i]);
    return 2.0 * s;
  }
};

bool try_factor(const std::vector<double>& a, std::size_t n, Cholesky& out) {
  const auto& k = simd::active();
  out.n = n;
  out.l.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double s = a[i * n + j] - k.dot(out.l.data() + i * n, out.l.data() + j * n, j);
      if (i == j) {
        if (!(s > 0.0)) return false;
        out.l[i * n + i] = std::sqrt(s);
      } else {
        out.l[i * n + j] = s / out.l[j * n + j];
      }
    }
  }
  return true;
}

Cholesky factor_kernel(std::span<const Observation> obs, const RBFParams& params) {
  const std::size_t n = obs.size();
  std::vector<double> base(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) base[i * n + j] = rbf_kernel(obs[i].step, obs[j].step, params);
    base[i * n + i] += params.noise_var;
  }
  Cholesky chol;
  for (double jitter = params.jitter; jitter <= kMaxJitter * 1.0000001; jitter *= 10.0) {
    std::vector<double> a = base;
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += jitter;
    if (try_factor(a, n, chol)) return chol;
  }
  throw NumericError("gp: kernel matrix not positive definite after jitter escalation");
}

double prior_mean(std::span<const Observation> obs) {
  double s = 0.0;
  for (const auto& o : obs) s += o.value;
  return s / static_cast<double>(obs.size());
}

double observation_variance(std::span<const Observation> obs) {
  const double m = prior_mean(obs);
  double s = 0.0;
  for (const auto& o : obs) s += (o.value - m) * (o.value - m);
  return s / static_cast<double>(obs.size());
}

}  // namespace

InterpolatedTrace gp_posterior(std::span<const Observation> obs, const RBFParams& params,
                               std::span<const double> query_steps) {
  check(obs, params);
  const std::size_t n = obs.size();
  const Cholesky chol = factor_kernel(obs, params);
  const double mu = prior_mean(obs);

  std::vector<double> alpha(n);
  for (std::size_t i = 0; i < n; ++i) alpha[i] = obs[i].value - mu;
  chol.forward_solve(alpha);
  chol.backward_solve(alpha);

  InterpolatedTrace trace;
  const std::size_t m = query_steps.size();
  trace.steps.assign(query_steps.begin(), query_steps.end());
  trace.mean.resize(m);
  trace.std.resize(m);
  trace.raw_mean.resize(m);
  trace.raw_var.resize(m);
  std::vector<double> kstar(n);
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t i = 0; i < n; ++i) kstar[i] = rbf_kernel(query_steps[q], obs[i].step, params);
    const double mean = mu + simd::dot(kstar, alpha);
    chol.forward_solve(kstar);
    const double explained = simd::squared_norm(kstar);
    const double var = std::max(params.signal_var - explained, 0.0) + params.noise_var;
    trace.raw_mean[q] = mean;
    trace.raw_var[q] = var;
    trace.mean[q] = std::clamp(mean, 0.0, 1.0);
    trace.std[q] = std::max(std::sqrt(var), kStdFloor);
  }
  return trace;
}

double log_marginal_likelihood(std::span<const Observation> obs, const RBFParams& params) {
  check(obs, params);
  const std::size_t n = obs.size();
  const Cholesky chol = factor_kernel(obs, params);
  const double mu = prior_mean(obs);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = obs[i].value - mu;
  chol.forward_solve(r);
  return -0.5 * simd::squared_norm(r) - 0.5 * chol.log_det() -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

RBFParams default_hyperparams(std::span<const Observation> obs, double horizon) {
  RBFParams p;
  p.length_scale = horizon / 10.0;
  p.noise_var = 1e-3;
  p.signal_var = obs.empty() ? kMinSignalVar : std::max(observation_variance(obs), kMinSignalVar);
  return p;
}

RBFParams select_hyperparams(std::span<const Observation> obs, double horizon) {
  if (!(horizon > 0.0)) throw Error("gp: horizon must be positive");
  RBFParams best = default_hyperparams(obs, horizon);
  if (obs.size() < 3) return best;
  const double signal_var = best.signal_var;
  double best_ll = -std::numeric_limits<double>::infinity();
  bool found = false;
  constexpr double kTieTol = 1e-12;
  // Visit larger length scales and smaller noise first so that a strict
  // improvement is needed to displace them.
  for (double divisor : {2.0, 5.0, 10.0, 20.0}) {
    for (double noise : {1e-4, 1e-3, 1e-2}) {
      RBFParams p;
      p.length_scale = horizon / divisor;
      p.noise_var = noise;
      p.signal_var = signal_var;
      double ll;
      try {
        ll = log_marginal_likelihood(obs, p);
      } catch (const NumericError&) {
        continue;
      }
      if (!found || ll > best_ll + kTieTol * std::max(1.0, std::abs(best_ll))) {
        best = p;
        best_ll = ll;
        found = true;
      }
    }
  }
  return best;
}

InterpolatedTrace interpolate_metrics(std::span<const Observation> obs, std::size_t horizon) {
  const RBFParams params = select_hyperparams(obs, static_cast<double>(horizon));
  std::vector<double> steps(horizon);
  for (std::size_t t = 0; t < horizon; ++t) steps[t] = static_cast<double>(t + 1);
  return gp_posterior(obs, params, steps);
}

}  // namespace metricopt
