#include "metricopt/meta_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

using nlohmann::json;

std::string_view schedule_name(ScheduleKind kind) {
  return kind == ScheduleKind::random ? "random" : "stride";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "random") return ScheduleKind::random;
  if (name == "stride") return ScheduleKind::stride;
  throw FormatError("unknown metric schedule '" + std::string(name) + "'");
}

std::string_view eval_split_name(EvalSplit split) {
  return split == EvalSplit::val ? "val" : "train_subset";
}

EvalSplit parse_eval_split(std::string_view name) {
  if (name == "val") return EvalSplit::val;
  if (name == "train_subset") return EvalSplit::train_subset;
  throw FormatError("unknown evaluation split '" + std::string(name) + "'");
}

std::string_view batch_sampling_name(BatchSampling sampling) {
  return sampling == BatchSampling::balanced ? "balanced" : "natural";
}

BatchSampling parse_batch_sampling(std::string_view name) {
  if (name == "balanced") return BatchSampling::balanced;
  if (name == "natural") return BatchSampling::natural;
  throw FormatError("unknown batch sampling '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (!theta) throw Error("task: base model missing");
  if (!data) throw Error("task: dataset missing");
  if (loss != "cross_entropy") throw Error("task: unsupported surrogate loss '" + loss + "'");
  if (horizon < 1) throw Error("task: T must be at least 1");
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw Error("task: K fraction must be in (0, 1]");
  if (batch_size < 2) throw Error("task: batch size must be at least 2");
  if (!(task_lr > 0.0)) throw Error("task: lr must be positive");
  if (!(phi_init_std >= 0.0)) throw Error("task: phi init std must be non-negative");
  check_adapter(*theta, adapter, adapter.dim, data->num_features());
}

std::size_t observation_count(std::size_t horizon, double k_fraction) {
  const auto k = static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(horizon) - 1e-9));
  return std::clamp<std::size_t>(k, 1, horizon);
}

std::vector<std::size_t> metric_schedule(std::size_t horizon, double k_fraction, ScheduleKind kind,
                                         Rng& rng) {
  const std::size_t k = observation_count(horizon, k_fraction);
  std::vector<std::size_t> steps;
  if (kind == ScheduleKind::random) {
    for (std::size_t s : sample_without_replacement(horizon, k, rng)) steps.push_back(s + 1);
    std::sort(steps.begin(), steps.end());
  } else {
    for (std::size_t j = 1; j <= k; ++j) steps.push_back((j * horizon) / k);
  }
  return steps;
}

namespace {

std::vector<std::size_t> eval_rows(const TaskSpec& task) {
  if (task.eval_split == EvalSplit::val) return task.data->indices(Split::val);
  auto train = task.data->indices(Split::train);
  const std::size_t n = std::min(task.train_subset_size, train.size());
  Rng rng(derive_seed(0, "train-subset"));
  std::vector<std::size_t> rows;
  for (std::size_t i : sample_without_replacement(train.size(), n, rng)) rows.push_back(train[i]);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

MetricOracle::MetricOracle(const TaskSpec& task, std::vector<std::size_t> rows)
    : theta_(task.theta), adapter_(task.adapter), kind_(task.metric),
      batch_(gather(*task.data, rows)) {}

MetricOracle::MetricOracle(const TaskSpec& task, Split split)
    : MetricOracle(task, task.data->indices(split)) {}

MetricOracle MetricOracle::for_task(const TaskSpec& task) { return MetricOracle(task, eval_rows(task)); }

MetricValue MetricOracle::operator()(std::span<const double> phi) const {
  ++calls_;
  const auto probs = predict_proba(*theta_, adapter_, phi, batch_.x);
  return evaluate_metric(kind_, probs, batch_.y);
}

TaskBatches::TaskBatches(const TaskSpec& task, std::uint64_t seed)
    : theta_(task.theta), data_(task.data), adapter_(task.adapter),
      batch_size_(task.batch_size), sampling_(task.sampling), seed_(seed),
      sampler_(*task.data, Split::train), train_rows_(task.data->indices(Split::train)) {}

LossAndGrad TaskBatches::loss_grad(std::size_t t, std::span<const double> phi) const {
  Rng rng(derive_seed(seed_, "batch", t));
  std::vector<std::size_t> rows;
  if (sampling_ == BatchSampling::balanced) {
    rows = sampler_.sample(batch_size_, rng);
  } else {
    const std::size_t n = std::min(batch_size_, train_rows_.size());
    for (std::size_t i : sample_without_replacement(train_rows_.size(), n, rng)) {
      rows.push_back(train_rows_[i]);
    }
  }
  const Batch batch = gather(*data_, rows);
  return cross_entropy_phi_grad(*theta_, adapter_, phi, batch.x, batch.y);
}

bool operator==(const FinetuneTrajectory& a, const FinetuneTrajectory& b) {
  if (a.phi != b.phi || a.loss != b.loss || a.metrics.size() != b.metrics.size()) return false;
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    if (a.metrics[i].step != b.metrics[i].step || a.metrics[i].value != b.metrics[i].value) {
      return false;
    }
  }
  return true;
}

FinetuneTrajectory run_finetune_task(const TaskSpec& task, std::uint64_t seed,
                                     const PhiStepper& stepper) {
  task.validate();
  Rng phi_rng(derive_seed(seed, "phi0"));
  Rng schedule_rng(derive_seed(seed, "schedule"));
  std::vector<double> phi = init_phi(task.adapter.dim, task.phi_init_std, phi_rng);
  const auto schedule = metric_schedule(task.horizon, task.k_fraction, task.schedule, schedule_rng);
  const MetricOracle oracle = MetricOracle::for_task(task);
  const TaskBatches batches(task, seed);

  FinetuneTrajectory traj;
  std::size_t next_obs = 0;
  for (std::size_t t = 0; t <= task.horizon; ++t) {
    if (next_obs < schedule.size() && schedule[next_obs] == t) {
      traj.metrics.push_back({static_cast<double>(t), oracle(phi).oriented});
      ++next_obs;
    }
    const LossAndGrad lg = batches.loss_grad(t, phi);
    if (!std::isfinite(lg.loss)) throw NumericError("finetuning loss diverged");
    traj.phi.push_back(phi);
    traj.loss.push_back(lg.loss);
    if (t == task.horizon) break;
    if (stepper) {
      stepper(t, phi, lg.grad, lg.loss);
    } else {
      sgd_step(phi, lg.grad, task.task_lr);
    }
    for (double v : phi) {
      if (!std::isfinite(v)) throw NumericError("finetuning parameters diverged");
    }
  }
  return traj;
}

TrainingSequence to_training_sequence(const FinetuneTrajectory& traj) {
  const std::size_t T = traj.horizon();
  if (T == 0) throw Error("training sequence: empty trajectory");
  if (traj.metrics.empty()) throw Error("training sequence: no metric observations");
  const InterpolatedTrace trace = interpolate_metrics(traj.metrics, T);
  const std::size_t d = traj.phi.front().size();
  TrainingSequence seq;
  seq.phi = Tensor::matrix(T, d);
  for (std::size_t t = 1; t <= T; ++t) {
    std::copy(traj.phi[t].begin(), traj.phi[t].end(), seq.phi.row_span(t - 1).begin());
  }
  seq.mean = trace.mean;
  seq.std = trace.std;
  return seq;
}

void write_trajectory_jsonl(std::ostream& out, const FinetuneTrajectory& traj) {
  std::size_t next_obs = 0;
  for (std::size_t t = 0; t < traj.phi.size(); ++t) {
    json rec = {{"t", t}, {"phi", traj.phi[t]}, {"loss", traj.loss[t]}};
    if (next_obs < traj.metrics.size() &&
        traj.metrics[next_obs].step == static_cast<double>(t)) {
      rec["metric"] = traj.metrics[next_obs].value;
      ++next_obs;
    }
    out << rec.dump() << '\n';
  }
}

FinetuneTrajectory read_trajectory_jsonl(std::istream& in) {
  FinetuneTrajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto t = rec.at("t").get<std::size_t>();
      if (t != traj.phi.size()) throw FormatError("steps out of order");
      traj.phi.push_back(rec.at("phi").get<std::vector<double>>());
      traj.loss.push_back(rec.at("loss").get<double>());
      if (rec.contains("metric")) {
        traj.metrics.push_back({static_cast<double>(t), rec.at("metric").get<double>()});
      }
    } catch (const json::exception& e) {
      throw FormatError("trajectory line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return traj;
}

void reptile_update(ModelWeights& w, const ModelWeights& inner, double eta) {
  if (!(w.spec() == inner.spec())) throw ShapeError("reptile: architectures differ");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error("reptile: eta must be in [0, 1]");
  auto p = w.params();
  const auto q = inner.params();
  // Convex-combination form keeps both endpoints exact.
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (1.0 - eta) * p[i] + eta * q[i];
  std::copy(inner.running().begin(), inner.running().end(), w.running().begin());
}

double meta_lr(std::size_t i, std::size_t iterations, double eta0) {
  if (i < 1 || i > iterations) throw Error("meta_lr: iteration out of range");
  return eta0 * (1.0 - static_cast<double>(i - 1) / static_cast<double>(iterations));
}

namespace {

// The latest `capacity` sequences, stacked newest last.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  TrainingSequence push(TrainingSequence seq) {
    if (capacity_ == 1) return seq;
    items_.push_back(std::move(seq));
    if (items_.size() > capacity_) items_.erase(items_.begin());
    return concat_sequences(items_);
  }

 private:
  std::size_t capacity_;
  std::vector<TrainingSequence> items_;
};

struct TaskRunner {
  const TaskSampler& sampler;
  std::size_t max_failures;
  std::size_t consecutive = 0;
  std::size_t failed = 0;

  // Empty optional-like result signalled through `ok`.
  bool run(std::uint64_t seed, FinetuneTrajectory& traj, TaskSpec* spec_out = nullptr,
           const PhiStepper& stepper = {}) {
    try {
      TaskSpec spec = sampler(seed);
      traj = run_finetune_task(spec, derive_seed(seed, "finetune"), stepper);
      if (spec_out) *spec_out = std::move(spec);
      consecutive = 0;
      return true;
    } catch (const NumericError&) {
      ++failed;
      if (++consecutive >= max_failures) {
        throw Error("meta-training aborted after " + std::to_string(consecutive) +
                    " consecutive failed tasks");
      }
      return false;
    }
  }
};

std::vector<TrainingSequence> collect_heldout(const MetaConfig& cfg, const TaskSampler& sampler,
                                              std::uint64_t seed) {
  std::vector<TrainingSequence> out;
  for (std::size_t j = 0; j < cfg.heldout_tasks; ++j) {
    const std::uint64_t s = derive_seed(seed, "heldout", j);
    out.push_back(to_training_sequence(
        run_finetune_task(sampler(s), derive_seed(s, "finetune"))));
  }
  return out;
}

ModelWeights initial_value_function(const MetaConfig& cfg, const TaskSampler& sampler,
                                   std::uint64_t seed) {
  const TaskSpec probe = sampler(derive_seed(seed, "probe"));
  Rng rng(derive_seed(seed, "value/init"));
  return init_value_function(probe.adapter.dim, rng, cfg.value_batchnorm, cfg.value_leaky_slope);
}

void finish_report(MetaReport& report, const ModelWeights& wv) {
  report.final_error = report.heldout.empty() ? 0.0 : prediction_error(wv, report.heldout);
}

MetaResult meta_train_offline(const MetaConfig& cfg, const TaskSampler& sampler,
                              std::uint64_t seed, ModelWeights wv, MetaReport report) {
  TaskRunner runner{sampler, cfg.max_consecutive_failures};
  std::vector<std::filesystem::path> files;
  std::vector<FinetuneTrajectory> buffer;
  if (!cfg.buffer_dir.empty()) std::filesystem::create_directories(cfg.buffer_dir);
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    FinetuneTrajectory traj;
    if (!runner.run(derive_seed(seed, "task", i), traj)) continue;
    if (cfg.buffer_dir.empty()) {
      buffer.push_back(std::move(traj));
    } else {
      std::ostringstream name;
      name << "trajectory_" << i << ".jsonl";
      files.push_back(cfg.buffer_dir / name.str());
      std::ofstream out(files.back());
      if (!out) throw Error("cannot write " + files.back().string());
      write_trajectory_jsonl(out, traj);
    }
  }
  Rng rng(derive_seed(seed, "value/anchors"));
  AdamState adam(wv.params().size());
  auto train_one = [&](const FinetuneTrajectory& traj) {
    train_value_function(wv, to_training_sequence(traj), cfg.inner, rng, &adam);
    ++report.completed;
  };
  for (const auto& traj : buffer) train_one(traj);
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    train_one(read_trajectory_jsonl(in));
  }
  report.failed = runner.failed;
  report.trained = report.completed > 0;
  finish_report(report, wv);
  return {std::move(wv), std::move(report)};
}

}  // namespace

MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler, std::uint64_t seed) {
  if (!(cfg.eta0 >= 0.0 && cfg.eta0 <= 1.0)) throw Error("meta: eta0 must be in [0, 1]");
  if (!(cfg.inner.lr > 0.0)) throw Error("meta: inner lr must be positive");
  if (cfg.max_consecutive_failures == 0) throw Error("meta: failure limit must be positive");
  ModelWeights wv = initial_value_function(cfg, sampler, seed);
  MetaReport report;
  report.heldout = collect_heldout(cfg, sampler, seed);
  report.initial_error = report.heldout.empty() ? 0.0 : prediction_error(wv, report.heldout);
  if (cfg.offline) return meta_train_offline(cfg, sampler, seed, std::move(wv), std::move(report));

  TaskRunner runner{sampler, cfg.max_consecutive_failures};
  Rng rng(derive_seed(seed, "value/anchors"));
  ReplayBuffer replay(cfg.replay);
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    FinetuneTrajectory traj;
    if (!runner.run(derive_seed(seed, "task", i), traj)) continue;
    ModelWeights inner = wv;
    train_value_function(inner, replay.push(to_training_sequence(traj)), cfg.inner, rng);
    reptile_update(wv, inner, meta_lr(i, cfg.iterations, cfg.eta0));
    ++report.completed;
  }
  report.failed = runner.failed;
  report.trained = report.completed > 0;
  finish_report(report, wv);
  return {std::move(wv), std::move(report)};
}

UnrollProblem make_unroll_problem(const TaskSpec& task, std::uint64_t seed) {
  task.validate();
  UnrollProblem problem;
  Rng phi_rng(derive_seed(seed, "phi0"));
  problem.phi0 = init_phi(task.adapter.dim, task.phi_init_std, phi_rng);
  problem.horizon = task.horizon;
  auto batches = std::make_shared<TaskBatches>(task, seed);
  problem.loss_grad = [batches](std::size_t t, std::span<const double> phi, std::span<double> grad) {
    const LossAndGrad lg = batches->loss_grad(t, phi);
    std::copy(lg.grad.begin(), lg.grad.end(), grad.begin());
    return lg.loss;
  };
  return problem;
}

PhiStepper make_learned_stepper(const ModelWeights& w_opt, const ModelWeights& wv) {
  auto state = std::make_shared<FeatureState>();
  return [state, &w_opt, &wv](std::size_t, std::span<double> phi, std::span<const double> grad,
                              double loss) {
    const double metric = predict(wv, phi);
    const auto features = assemble_features(*state, grad, phi, normalize_loss(loss), metric);
    const LearnedUpdate up = learned_opt_step(w_opt, features);
    simd::axpy(up.alpha, up.direction, phi);
  };
}

JointResult meta_train_joint(const MetaConfig& cfg, const LearnedOptTrainConfig& opt_cfg,
                             const TaskSampler& sampler, std::uint64_t seed) {
  ModelWeights wv = initial_value_function(cfg, sampler, seed);
  Rng opt_init(derive_seed(seed, "learned-opt/init"));
  ModelWeights w_opt = init_learned_optimizer(opt_init);
  MetaReport report;
  report.heldout = collect_heldout(cfg, sampler, seed);
  report.initial_error = report.heldout.empty() ? 0.0 : prediction_error(wv, report.heldout);

  TaskRunner runner{sampler, cfg.max_consecutive_failures};
  Rng rng(derive_seed(seed, "value/anchors"));
  ReplayBuffer replay(cfg.replay);
  Rng es_rng(derive_seed(seed, "learned-opt/es"));
  AdamState opt_adam(w_opt.params().size());
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    const std::uint64_t task_seed = derive_seed(seed, "task", i);
    FinetuneTrajectory traj;
    TaskSpec task;
    if (!runner.run(task_seed, traj, &task, make_learned_stepper(w_opt, wv))) continue;
    ModelWeights inner = wv;
    train_value_function(inner, replay.push(to_training_sequence(traj)), cfg.inner, rng);
    reptile_update(wv, inner, meta_lr(i, cfg.iterations, cfg.eta0));

    const UnrollProblem problem = make_unroll_problem(task, derive_seed(task_seed, "unroll"));
    const ValueQuery f = [&wv](std::span<const double> phi) { return predict(wv, phi); };
    learned_optimizer_es_step(w_opt, opt_adam, problem, f, opt_cfg, es_rng);
    ++report.completed;
  }
  report.failed = runner.failed;
  report.trained = report.completed > 0;
  finish_report(report, wv);
  return {std::move(wv), std::move(w_opt), std::move(report)};
}

}  // namespace metricopt
