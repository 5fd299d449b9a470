#pragma once

// Black-box evaluation metrics and the cross-entropy surrogate. Metrics are
// only ever queried for scalar values.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace metricopt {

enum class MetricKind { mcr, f_measure, jaccard, aucpr };
enum class Orientation { lower_better, higher_better };

Orientation orientation(MetricKind kind);
std::string_view metric_name(MetricKind kind);
MetricKind parse_metric_kind(std::string_view name);

inline constexpr double kDefaultThreshold = 0.5;

struct MetricValue {
  double raw;       // conventional orientation, for reporting
  double oriented;  // lower is better; what optimization sees
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// A score >= threshold predicts the positive class.
Confusion confusion(std::span<const double> scores, std::span<const int> labels,
                    double threshold = kDefaultThreshold);

// Rank-based average precision: mean over positives of the precision among
// all examples scoring at least as high as that positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// `scores` are probabilities in [0,1]. Every returned value lies in [0,1].
MetricValue evaluate_metric(MetricKind kind, std::span<const double> scores,
                            std::span<const int> labels, double threshold = kDefaultThreshold);

// Mean binary cross-entropy on logits. Per-example probabilities are clamped
// to [1e-12, 1 - 1e-12], so the loss is always finite.
double cross_entropy(std::span<const double> logits, std::span<const int> labels);

// Same loss; writes d(loss)/d(logit_i) into `dlogits`.
double cross_entropy_with_grad(std::span<const double> logits, std::span<const int> labels,
                               std::span<double> dlogits);

// Squashes a non-negative loss into [0,1).
inline double normalize_loss(double loss) { return loss / (loss + 1.0); }

}  // namespace metricopt
