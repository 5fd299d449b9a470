#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "metricopt/rng.hpp"
#include "metricopt/tensor.hpp"

namespace metricopt {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct LabeledDataset {
  Tensor features;          // n x p
  std::vector<int> labels;  // 0 / 1
  std::vector<Split> splits;

  std::size_t size() const { return labels.size(); }
  std::size_t num_features() const { return features.cols(); }
  std::vector<std::size_t> indices(Split split) const;
  // Shapes agree, labels binary, every split holds both classes.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// Seeded shuffle into train/val/test blocks.
void assign_splits(LabeledDataset& data, std::uint64_t seed, const SplitFractions& fractions = {});

// Two Gaussian classes with unit covariance whose means sit `separation`
// apart along a random direction. Labels ~ Bernoulli(class_imbalance).
LabeledDataset generate_synthetic_task(double class_imbalance, std::size_t n, std::size_t p,
                                       std::uint64_t seed, double separation = 2.0);

// LIBSVM / SVMlight sparse text: "<label> <idx>:<val> ..." with 1-based
// ascending indices. Labels -1/+1 (or 0/1) map to 0/1. When `num_features`
// is unset the largest index seen is used. Splits 70/10/20 by `split_seed`.
LabeledDataset parse_libsvm(std::istream& in, std::optional<std::size_t> num_features = {},
                            std::uint64_t split_seed = 0);
LabeledDataset load_libsvm(const std::filesystem::path& path,
                           std::optional<std::size_t> num_features = {},
                           std::uint64_t split_seed = 0);

// Binary cache: magic, n, p, features, labels, splits.
void save_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset load_dataset_cache(const std::filesystem::path& path);

struct Batch {
  Tensor x;
  std::vector<int> y;
};

Batch gather(const LabeledDataset& data, std::span<const std::size_t> rows);

// Mini-batches with ceil(B/2) positives and floor(B/2) negatives, drawn
// without replacement inside a batch when the class is large enough.
class BalancedSampler {
 public:
  BalancedSampler(const LabeledDataset& data, Split split);
  std::vector<std::size_t> sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::vector<std::size_t> positives_;
  std::vector<std::size_t> negatives_;
};

}  // namespace metricopt
