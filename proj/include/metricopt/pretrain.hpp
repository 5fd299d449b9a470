#pragma once

#include <cstdint>
#include <vector>

#include "metricopt/adapter.hpp"
#include "metricopt/dataset.hpp"
#include "metricopt/mlp.hpp"

namespace metricopt {

struct BaseModelConfig {
  std::vector<std::size_t> hidden{100, 30, 10};
  double leaky_slope = 0.01;
  bool batchnorm = true;
};

// Leaky-ReLU MLP with a scalar logit output, sized for the adapter slot.
MLPSpec base_model_spec(std::size_t p, const BaseModelConfig& base, const AdapterConfig& adapter);

struct PretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  double lr = 1e-3;  // Adam
};

// Cross-entropy training of every weight with class-balanced mini-batches
// from the train split and phi = 0 in the adapter slot. Throws NumericError
// if the loss diverges.
ModelWeights pretrain_base_model(const MLPSpec& spec, const AdapterConfig& adapter,
                                 const LabeledDataset& data, const PretrainConfig& cfg,
                                 std::uint64_t seed);

}  // namespace metricopt
