#pragma once

// The meta-train -> meta-test pipeline behind the command-line tool.
//
// Seeds: every component seed is derived from the global `seed` with
// derive_seed(seed, tag): "data" (dataset generation and split), "pretrain",
// "meta" (value-function meta-training). Finetuning run k uses
// derive_seed(seed, "finetune", seeds[k]); all methods share it, so they see
// the same phi_0 and mini-batches.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metricopt/config.hpp"
#include "metricopt/meta_test.hpp"
#include "metricopt/report.hpp"

namespace metricopt {

LabeledDataset build_dataset(const ExperimentConfig& cfg);

struct Pipeline {
  ExperimentConfig cfg;
  std::shared_ptr<const LabeledDataset> data;
  std::shared_ptr<const ModelWeights> theta;

  TaskSpec task() const;
};

// Validates the config, builds the dataset and pre-trains the base model.
Pipeline prepare_pipeline(const ExperimentConfig& cfg);

MetaConfig meta_config(const ExperimentConfig& cfg);

struct MetaTrainOutcome {
  ModelWeights wv;
  std::optional<ModelWeights> w_opt;
  MetaReport report;
  // Same run with the ordinal-embedding term switched off, when requested.
  std::optional<MetaReport> no_oe_report;
};

// Meta-trains the value function (and the learned optimizer when
// meta.learned_optimizer is set).
MetaTrainOutcome meta_train_pipeline(const Pipeline& p, bool compare_without_oe = false);

// Finetunes every configured seed with `method`. Per-step logs go to
// `log_dir` when it is non-empty.
std::vector<ResultsRow> finetune_pipeline(const Pipeline& p, Method method,
                                          const ModelWeights* wv, const ModelWeights* w_opt,
                                          const std::filesystem::path& log_dir = {});

nlohmann::json meta_report_json(const MetaTrainOutcome& outcome);

// Command implementations. Both write manifest.json (config and derived
// seeds) into the output directory so a run can be replayed from it.
MetaTrainOutcome cmd_meta_train(const ExperimentConfig& cfg, bool compare_without_oe = false);
std::vector<ResultsRow> cmd_finetune(const ExperimentConfig& cfg,
                                     const std::filesystem::path& checkpoint_dir,
                                     const std::vector<std::string>& methods);

// Reads results.csv under `results_dir`, writes summary.csv and summary.txt
// there and returns the summary.
Summary cmd_report(const std::filesystem::path& results_dir);

nlohmann::json manifest_json(const ExperimentConfig& cfg, const std::string& command);
ExperimentConfig config_from_manifest(const std::filesystem::path& manifest);

}  // namespace metricopt
