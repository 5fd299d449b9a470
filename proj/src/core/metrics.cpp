#include "metricopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "metricopt/error.hpp"

namespace metricopt {

namespace {

constexpr double kProbClamp = 1e-12;

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("metric: scores/labels size mismatch");
  if (scores.empty()) throw Error("metric: empty evaluation set");
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("metric: labels must be 0 or 1");
  }
}

void require_both_classes(std::span<const int> labels, std::string_view what) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) {
    throw Error(std::string(what) + ": needs at least one positive and one negative label");
  }
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Orientation orientation(MetricKind kind) {
  return kind == MetricKind::mcr ? Orientation::lower_better : Orientation::higher_better;
}

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::mcr: return "mcr";
    case MetricKind::f_measure: return "f_measure";
    case MetricKind::jaccard: return "jaccard";
    case MetricKind::aucpr: return "aucpr";
  }
  return "unknown";
}

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "mcr") return MetricKind::mcr;
  if (name == "f_measure" || name == "f-measure") return MetricKind::f_measure;
  if (name == "jaccard") return MetricKind::jaccard;
  if (name == "aucpr") return MetricKind::aucpr;
  throw FormatError("unknown metric '" + std::string(name) + "'");
}

Confusion confusion(std::span<const double> scores, std::span<const int> labels,
                    double threshold) {
  check_inputs(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  require_both_classes(labels, "aucpr");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Tied scores share the precision measured at the end of their group.
  double sum = 0.0;
  std::size_t seen = 0, seen_pos = 0, positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += labels[order[j]] == 1;
      ++j;
    }
    seen += j - i;
    seen_pos += group_pos;
    sum += static_cast<double>(group_pos) * static_cast<double>(seen_pos) /
           static_cast<double>(seen);
    positives += group_pos;
    i = j;
  }
  return sum / static_cast<double>(positives);
}

MetricValue evaluate_metric(MetricKind kind, std::span<const double> scores,
                            std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  double raw = 0.0;
  switch (kind) {
    case MetricKind::mcr: {
      const Confusion c = confusion(scores, labels, threshold);
      raw = static_cast<double>(c.fp + c.fn) / static_cast<double>(scores.size());
      break;
    }
    case MetricKind::f_measure: {
      require_both_classes(labels, "f_measure");
      const Confusion c = confusion(scores, labels, threshold);
      const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
      raw = denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
      break;
    }
    case MetricKind::jaccard: {
      require_both_classes(labels, "jaccard");
      const Confusion c = confusion(scores, labels, threshold);
      const double denom = static_cast<double>(c.tp + c.fp + c.fn);
      raw = denom > 0.0 ? static_cast<double>(c.tp) / denom : 0.0;
      break;
    }
    case MetricKind::aucpr:
      raw = average_precision(scores, labels);
      break;
  }
  raw = std::clamp(raw, 0.0, 1.0);
  const double oriented = orientation(kind) == Orientation::lower_better ? raw : 1.0 - raw;
  return {raw, oriented};
}

double cross_entropy(std::span<const double> logits, std::span<const int> labels) {
  std::vector<double> scratch(logits.size());
  return cross_entropy_with_grad(logits, labels, scratch);
}

double cross_entropy_with_grad(std::span<const double> logits, std::span<const int> labels,
                               std::span<double> dlogits) {
  if (logits.size() != labels.size() || dlogits.size() != logits.size()) {
    throw ShapeError("cross_entropy: size mismatch");
  }
  if (logits.empty()) throw Error("cross_entropy: empty batch");
  static const double max_loss = -std::log(kProbClamp);
  static const double min_loss = -std::log1p(-kProbClamp);
  const double n = static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double raw = labels[i] == 1 ? softplus(-z) : softplus(z);
    // The clamp bounds the value only; the gradient stays sigmoid(z) - y so
    // confidently wrong examples keep pulling.
    const double loss = std::clamp(raw, min_loss, max_loss);
    const double grad = sigmoid(z) - static_cast<double>(labels[i]);
    total += loss;
    dlogits[i] = grad / n;
  }
  return total / n;
}

}  // namespace metricopt
