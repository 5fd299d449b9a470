#pragma once

// Finetuning a fresh phi on a task with one of the compared methods, using a
// meta-trained value function (and learned optimizer) where the method needs
// them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "metricopt/guided_es.hpp"
#include "metricopt/meta_trainer.hpp"

namespace metricopt {

enum class Method { loss_only, metricopt_sgd, metricopt_adam, metricopt_learned, metric_only };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
bool needs_value_function(Method m);

struct StepRecord {
  std::size_t t = 0;
  double loss = 0.0;
  double u_norm = 0.0;
  double grad_norm = 0.0;
  std::optional<double> metric;  // oriented evaluation-split metric, when logged
};

struct MetaTestConfig {
  GuidedESConfig es;
  double adam_lr = 0.01;         // metricopt-adam; SGD methods use the task lr
  std::size_t metric_every = 0;  // log the evaluation metric every n steps (0: never)
};

struct MetaTestResult {
  std::vector<double> phi;  // final adapter
  MetricValue test_metric{};
  double test_loss = 0.0;
  std::vector<StepRecord> steps;
  std::size_t value_queries = 0;
};

// phi_0 and the mini-batches come from the same seed streams as
// run_finetune_task, so methods compared under one seed see identical data.
MetaTestResult run_meta_test(const TaskSpec& task, Method method, const ModelWeights* wv,
                             const ModelWeights* w_opt, const MetaTestConfig& cfg,
                             std::uint64_t seed);

}  // namespace metricopt
