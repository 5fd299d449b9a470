#pragma once

// Meta-training of the value function: finetune phi with the surrogate loss,
// observe the metric at a few steps, interpolate, fit the value function to
// the trajectory and fold the adapted weights back in with Reptile.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metricopt/adapter.hpp"
#include "metricopt/dataset.hpp"
#include "metricopt/gp.hpp"
#include "metricopt/learned_optimizer.hpp"
#include "metricopt/metrics.hpp"
#include "metricopt/value_function.hpp"

namespace metricopt {

enum class ScheduleKind { random, stride };
enum class EvalSplit { val, train_subset };
// How finetuning mini-batches are drawn from the train split.
enum class BatchSampling { balanced, natural };

std::string_view schedule_name(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view eval_split_name(EvalSplit split);
EvalSplit parse_eval_split(std::string_view name);
std::string_view batch_sampling_name(BatchSampling sampling);
BatchSampling parse_batch_sampling(std::string_view name);

struct TaskSpec {
  std::shared_ptr<const ModelWeights> theta;
  std::shared_ptr<const LabeledDataset> data;
  AdapterConfig adapter;
  std::string loss = "cross_entropy";
  MetricKind metric = MetricKind::mcr;
  std::size_t horizon = 50;  // T
  double k_fraction = 0.05;
  std::size_t batch_size = 64;
  BatchSampling sampling = BatchSampling::balanced;
  double task_lr = 0.05;
  double phi_init_std = 0.01;
  ScheduleKind schedule = ScheduleKind::random;
  EvalSplit eval_split = EvalSplit::val;
  std::size_t train_subset_size = 512;

  void validate() const;
};

// Number of observed steps: ceil(k_fraction * T), at least 1.
std::size_t observation_count(std::size_t horizon, double k_fraction);

// Sorted observation steps in 1..T. `random` samples without replacement;
// `stride` spaces them evenly and always ends at T.
std::vector<std::size_t> metric_schedule(std::size_t horizon, double k_fraction, ScheduleKind kind,
                                         Rng& rng);

// Black-box metric of the modulated base model on the task's evaluation rows.
class MetricOracle {
 public:
  explicit MetricOracle(const TaskSpec& task, Split split);
  // Evaluation rows chosen by task.eval_split.
  static MetricOracle for_task(const TaskSpec& task);

  MetricValue operator()(std::span<const double> phi) const;
  std::size_t calls() const { return calls_; }

 private:
  MetricOracle(const TaskSpec& task, std::vector<std::size_t> rows);

  std::shared_ptr<const ModelWeights> theta_;
  AdapterConfig adapter_;
  MetricKind kind_;
  Batch batch_;
  mutable std::size_t calls_ = 0;
};

// Cross-entropy and phi-gradient on the mini-batch for step t; batches are a
// pure function of (task data, seed, t).
class TaskBatches {
 public:
  TaskBatches(const TaskSpec& task, std::uint64_t seed);
  LossAndGrad loss_grad(std::size_t t, std::span<const double> phi) const;

 private:
  std::shared_ptr<const ModelWeights> theta_;
  std::shared_ptr<const LabeledDataset> data_;
  AdapterConfig adapter_;
  std::size_t batch_size_;
  BatchSampling sampling_;
  std::uint64_t seed_;
  BalancedSampler sampler_;
  std::vector<std::size_t> train_rows_;
};

struct FinetuneTrajectory {
  std::vector<std::vector<double>> phi;  // phi_0..phi_T
  std::vector<double> loss;              // mini-batch loss at phi_t
  std::vector<Observation> metrics;      // oriented metric at observed steps

  std::size_t horizon() const { return phi.empty() ? 0 : phi.size() - 1; }
  friend bool operator==(const FinetuneTrajectory& a, const FinetuneTrajectory& b);
};

// Updates phi in place given step t, the loss gradient and loss at phi_t.
using PhiStepper = std::function<void(std::size_t t, std::span<double> phi,
                                      std::span<const double> grad, double loss)>;

// T steps from a random phi_0. Without a stepper the update is plain SGD with
// task.lr. Throws NumericError if the loss diverges.
FinetuneTrajectory run_finetune_task(const TaskSpec& task, std::uint64_t seed,
                                     const PhiStepper& stepper = {});

// GP-interpolated labels at steps 1..T.
TrainingSequence to_training_sequence(const FinetuneTrajectory& traj);

// One JSON object per step: {"t", "phi", "loss", "metric"?}.
void write_trajectory_jsonl(std::ostream& out, const FinetuneTrajectory& traj);
FinetuneTrajectory read_trajectory_jsonl(std::istream& in);

// w <- w + eta (inner - w); running BatchNorm stats are copied from `inner`.
void reptile_update(ModelWeights& w, const ModelWeights& inner, double eta);

// eta_i = eta0 (1 - (i - 1) / N) for i = 1..N.
double meta_lr(std::size_t i, std::size_t iterations, double eta0 = 1.0);

using TaskSampler = std::function<TaskSpec(std::uint64_t seed)>;

struct MetaConfig {
  std::size_t iterations = 200;  // N
  ValueTrainConfig inner;
  double eta0 = 1.0;
  std::size_t heldout_tasks = 5;
  std::size_t max_consecutive_failures = 3;
  bool value_batchnorm = true;
  double value_leaky_slope = 0.0;  // 0 keeps plain ReLU
  // Trajectories per inner batch: the new one plus the most recent earlier
  // ones. 1 trains on the new trajectory alone.
  std::size_t replay = 1;
  // Collect every trajectory first and fit one value function sequentially
  // over the buffer instead of Reptile updates.
  bool offline = false;
  std::filesystem::path buffer_dir;  // offline only; empty keeps the buffer in memory
};

struct MetaReport {
  bool trained = false;
  double initial_error = 0.0;  // mean held-out |f - M| before training
  double final_error = 0.0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::vector<TrainingSequence> heldout;
};

struct MetaResult {
  ModelWeights wv;
  MetaReport report;
};

// Throws Error after `max_consecutive_failures` diverged tasks in a row.
MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler, std::uint64_t seed);

// Learned-optimizer problem on the same batches run_finetune_task would draw.
UnrollProblem make_unroll_problem(const TaskSpec& task, std::uint64_t seed);

// Stepper driven by a learned optimizer whose metric feature is the value
// function's prediction.
PhiStepper make_learned_stepper(const ModelWeights& w_opt, const ModelWeights& wv);

struct JointResult {
  ModelWeights wv;
  ModelWeights w_opt;
  MetaReport report;
};

// Alternates per meta-iteration: trajectory with the current learned
// optimizer, value-function Reptile step, one ES step on w_opt.
JointResult meta_train_joint(const MetaConfig& cfg, const LearnedOptTrainConfig& opt_cfg,
                             const TaskSampler& sampler, std::uint64_t seed);

}  // namespace metricopt
