#pragma once

// Experiment configuration: a JSON document whose every key has a built-in
// default. Unknown keys, wrong types and out-of-range values are rejected
// with the offending key named in the message.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "metricopt/adapter.hpp"
#include "metricopt/guided_es.hpp"
#include "metricopt/learned_optimizer.hpp"
#include "metricopt/meta_test.hpp"
#include "metricopt/pretrain.hpp"
#include "metricopt/value_function.hpp"

namespace metricopt {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | libsvm
  std::string path;                  // libsvm file
  std::string cache;                 // optional binary cache next to the parsed file
  std::size_t num_features = 0;      // libsvm; 0 = largest index seen
  double imbalance = 0.24;           // synthetic positive fraction
  std::size_t n = 6000;
  std::size_t p = 20;
  double separation = 2.0;
};

struct TaskOptions {
  MetricKind metric = MetricKind::mcr;
  std::size_t horizon = 50;
  double k_fraction = 0.05;
  std::size_t batch_size = 64;
  BatchSampling sampling = BatchSampling::balanced;
  double lr = 0.05;
  double phi_init_std = 0.01;
  ScheduleKind schedule = ScheduleKind::random;
  EvalSplit eval_split = EvalSplit::val;
  std::size_t train_subset_size = 512;
};

struct MetaOptions {
  std::size_t iterations = 200;
  double eta0 = 1.0;
  std::size_t heldout_tasks = 5;
  std::size_t max_consecutive_failures = 3;
  bool offline = false;
  bool learned_optimizer = false;  // joint value-function / optimizer training
  std::size_t replay = 1;          // trajectories per value-function inner batch
};

struct FinetuneOptions {
  std::vector<std::string> methods{"loss-only", "metricopt-sgd"};
  double adam_lr = 0.01;
  std::size_t metric_every = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string output_dir = "runs/default";
  DataConfig data;
  BaseModelConfig base;
  PretrainConfig pretrain;
  AdapterConfig adapter;
  TaskOptions task;
  ValueTrainConfig value;
  bool value_batchnorm = true;
  double value_leaky_slope = 0.0;
  MetaOptions meta;
  GuidedESConfig es;
  FinetuneOptions finetune;
  LearnedOptTrainConfig learned;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults. Throws FormatError naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Applies "a.b.c=value" to a config document. The value is parsed as JSON
// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Collects every violated precondition; throws FormatError listing them.
void validate_config(const ExperimentConfig& cfg);

}  // namespace metricopt
