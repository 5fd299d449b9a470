#pragma once

#include <filesystem>
#include <string>

#include "metricopt/mlp.hpp"

namespace metricopt {

// Self-describing JSON checkpoint: spec, trainable parameters and running
// BatchNorm stats. Doubles are written in shortest round-trip form, so
// load(save(w)) == w bit for bit.
std::string checkpoint_to_string(const ModelWeights& weights);
ModelWeights checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights);
ModelWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace metricopt
