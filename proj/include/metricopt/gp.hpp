#pragma once

// Gaussian-process regression over the step axis with an RBF kernel, used to
// turn a handful of metric observations into a dense (mean, std) series.

#include <span>
#include <vector>

namespace metricopt {

struct Observation {
  double step;
  double value;
};

struct RBFParams {
  double length_scale = 1.0;  // in steps
  double signal_var = 1.0;
  double noise_var = 1e-3;
  double jitter = 1e-10;  // first diagonal jitter; escalated x10 up to kMaxJitter
};

inline constexpr double kStdFloor = 1e-3;
inline constexpr double kMaxJitter = 1e-6;
inline constexpr double kMinSignalVar = 1e-6;

struct InterpolatedTrace {
  std::vector<double> steps;
  std::vector<double> mean;  // clamped to [0, 1]
  std::vector<double> std;   // predictive std (noise included), floored at kStdFloor
  // Unclamped posterior mean and predictive variance.
  std::vector<double> raw_mean;
  std::vector<double> raw_var;
};

double rbf_kernel(double a, double b, const RBFParams& params);

// Posterior at `query_steps`. The prior mean is the mean of the observed
// values. Throws NumericError when the kernel matrix cannot be factorized
// even with kMaxJitter on the diagonal.
InterpolatedTrace gp_posterior(std::span<const Observation> obs, const RBFParams& params,
                               std::span<const double> query_steps);

double log_marginal_likelihood(std::span<const Observation> obs, const RBFParams& params);

// Defaults used when there are fewer than three observations:
// length_scale = T/10, noise_var = 1e-3.
RBFParams default_hyperparams(std::span<const Observation> obs, double horizon);

// Grid search over length_scale in {T/20, T/10, T/5, T/2} and noise_var in
// {1e-4, 1e-3, 1e-2} maximizing the log marginal likelihood; signal_var is the
// observation variance. Ties go to the larger length scale, then the smaller
// noise.
RBFParams select_hyperparams(std::span<const Observation> obs, double horizon);

// Posterior at steps 1..T with hyperparameters picked by select_hyperparams.
InterpolatedTrace interpolate_metrics(std::span<const Observation> obs, std::size_t horizon);

}  // namespace metricopt
