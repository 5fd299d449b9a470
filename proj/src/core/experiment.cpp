#include "metricopt/experiment.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

#include "metricopt/checkpoint.hpp"
#include "metricopt/error.hpp"

namespace metricopt {

using nlohmann::json;

namespace {

constexpr const char* kValueCheckpoint = "value_function.json";
constexpr const char* kOptimizerCheckpoint = "learned_optimizer.json";
constexpr const char* kBaseCheckpoint = "base_model.json";

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

LabeledDataset build_dataset(const ExperimentConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, "data");
  if (cfg.data.source == "synthetic") {
    return generate_synthetic_task(cfg.data.imbalance, cfg.data.n, cfg.data.p, seed,
                                   cfg.data.separation);
  }
  if (!cfg.data.cache.empty() && std::filesystem::exists(cfg.data.cache)) {
    return load_dataset_cache(cfg.data.cache);
  }
  std::optional<std::size_t> p;
  if (cfg.data.num_features > 0) p = cfg.data.num_features;
  LabeledDataset data = load_libsvm(cfg.data.path, p, seed);
  if (!cfg.data.cache.empty()) save_dataset_cache(cfg.data.cache, data);
  return data;
}

TaskSpec Pipeline::task() const {
  TaskSpec t;
  t.theta = theta;
  t.data = data;
  t.adapter = cfg.adapter;
  t.metric = cfg.task.metric;
  t.horizon = cfg.task.horizon;
  t.k_fraction = cfg.task.k_fraction;
  t.batch_size = cfg.task.batch_size;
  t.sampling = cfg.task.sampling;
  t.task_lr = cfg.task.lr;
  t.phi_init_std = cfg.task.phi_init_std;
  t.schedule = cfg.task.schedule;
  t.eval_split = cfg.task.eval_split;
  t.train_subset_size = cfg.task.train_subset_size;
  return t;
}

Pipeline prepare_pipeline(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Pipeline p;
  p.cfg = cfg;
  auto data = std::make_shared<LabeledDataset>(build_dataset(cfg));
  data->validate();
  const MLPSpec spec = base_model_spec(data->num_features(), cfg.base, cfg.adapter);
  p.theta = std::make_shared<const ModelWeights>(
      pretrain_base_model(spec, cfg.adapter, *data, cfg.pretrain, derive_seed(cfg.seed, "pretrain")));
  p.data = std::move(data);
  return p;
}

MetaConfig meta_config(const ExperimentConfig& cfg) {
  MetaConfig m;
  m.iterations = cfg.meta.iterations;
  m.inner = cfg.value;
  m.eta0 = cfg.meta.eta0;
  m.heldout_tasks = cfg.meta.heldout_tasks;
  m.max_consecutive_failures = cfg.meta.max_consecutive_failures;
  m.offline = cfg.meta.offline;
  m.value_batchnorm = cfg.value_batchnorm;
  m.value_leaky_slope = cfg.value_leaky_slope;
  m.replay = cfg.meta.replay;
  if (m.offline && !cfg.output_dir.empty()) {
    m.buffer_dir = std::filesystem::path(cfg.output_dir) / "trajectory_buffer";
  }
  return m;
}

MetaTrainOutcome meta_train_pipeline(const Pipeline& p, bool compare_without_oe) {
  const TaskSpec task = p.task();
  const TaskSampler sampler = [task](std::uint64_t) { return task; };
  const MetaConfig mc = meta_config(p.cfg);
  const std::uint64_t seed = derive_seed(p.cfg.seed, "meta");
  MetaTrainOutcome out;
  if (p.cfg.meta.learned_optimizer) {
    JointResult r = meta_train_joint(mc, p.cfg.learned, sampler, seed);
    out.wv = std::move(r.wv);
    out.w_opt = std::move(r.w_opt);
    out.report = std::move(r.report);
  } else {
    MetaResult r = meta_train(mc, sampler, seed);
    out.wv = std::move(r.wv);
    out.report = std::move(r.report);
  }
  if (compare_without_oe) {
    MetaConfig off = mc;
    off.inner.use_oe = !mc.inner.use_oe;
    MetaResult r = meta_train(off, sampler, seed);
    out.no_oe_report = std::move(r.report);
    if (!mc.inner.use_oe) std::swap(out.report, *out.no_oe_report);
  }
  return out;
}

std::vector<ResultsRow> finetune_pipeline(const Pipeline& p, Method method,
                                          const ModelWeights* wv, const ModelWeights* w_opt,
                                          const std::filesystem::path& log_dir) {
  const TaskSpec task = p.task();
  MetaTestConfig mt;
  mt.es = p.cfg.es;
  mt.adam_lr = p.cfg.finetune.adam_lr;
  mt.metric_every = p.cfg.finetune.metric_every;
  if (!log_dir.empty()) std::filesystem::create_directories(log_dir);
  std::vector<ResultsRow> rows;
  for (std::uint64_t s : p.cfg.seeds) {
    const auto start = std::chrono::steady_clock::now();
    const MetaTestResult r = run_meta_test(task, method, method == Method::loss_only ? nullptr : wv,
                                           w_opt, mt, derive_seed(p.cfg.seed, "finetune", s));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ResultsRow row;
    row.run_id = std::string(method_name(method)) + "-seed" + std::to_string(s);
    row.seed = s;
    row.method = std::string(method_name(method));
    row.metric = std::string(metric_name(task.metric));
    row.test_metric_raw = r.test_metric.raw;
    row.test_metric_oriented = r.test_metric.oriented;
    row.test_loss = r.test_loss;
    row.wall_time_s = secs;
    rows.push_back(row);
    if (!log_dir.empty()) {
      std::ofstream log(log_dir / (row.run_id + ".jsonl"));
      if (!log) throw Error("cannot write step log for " + row.run_id);
      for (const StepRecord& st : r.steps) {
        json rec = {{"t", st.t}, {"loss", st.loss}, {"u_norm", st.u_norm},
                    {"grad_norm", st.grad_norm}};
        if (st.metric) rec["metric"] = *st.metric;
        log << rec.dump() << '\n';
      }
    }
  }
  return rows;
}

json meta_report_json(const MetaTrainOutcome& o) {
  auto one = [](const MetaReport& r) {
    return json{{"trained", r.trained},
                {"status", r.trained ? "trained" : "untrained"},
                {"heldout_error_initial", r.initial_error},
                {"heldout_error_final", r.final_error},
                {"completed_tasks", r.completed},
                {"failed_tasks", r.failed}};
  };
  json j = one(o.report);
  if (o.no_oe_report) {
    j["without_oe"] = one(*o.no_oe_report);
  }
  return j;
}

json manifest_json(const ExperimentConfig& cfg, const std::string& command) {
  json seeds = {{"data", derive_seed(cfg.seed, "data")},
                {"pretrain", derive_seed(cfg.seed, "pretrain")},
                {"meta", derive_seed(cfg.seed, "meta")}};
  json runs = json::array();
  for (std::uint64_t s : cfg.seeds) runs.push_back(derive_seed(cfg.seed, "finetune", s));
  seeds["finetune"] = runs;
  return {{"command", command}, {"config", config_to_json(cfg)}, {"derived_seeds", seeds}};
}

ExperimentConfig config_from_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot read manifest " + manifest.string());
  try {
    return config_from_json(json::parse(in).at("config"));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest.string() + ": " + e.what());
  }
}

MetaTrainOutcome cmd_meta_train(const ExperimentConfig& cfg, bool compare_without_oe) {
  const Pipeline p = prepare_pipeline(cfg);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  write_json(dir / "manifest.json", manifest_json(cfg, "meta-train"));
  MetaTrainOutcome out = meta_train_pipeline(p, compare_without_oe);
  save_checkpoint(dir / kBaseCheckpoint, *p.theta);
  save_checkpoint(dir / kValueCheckpoint, out.wv);
  if (out.w_opt) save_checkpoint(dir / kOptimizerCheckpoint, *out.w_opt);
  write_json(dir / "meta_report.json", meta_report_json(out));
  return out;
}

std::vector<ResultsRow> cmd_finetune(const ExperimentConfig& cfg,
                                     const std::filesystem::path& checkpoint_dir,
                                     const std::vector<std::string>& methods) {
  std::vector<Method> parsed;
  for (const auto& m : methods) parsed.push_back(parse_method(m));
  std::optional<ModelWeights> wv, w_opt;
  for (Method m : parsed) {
    if (!needs_value_function(m) || wv) continue;
    const auto path = checkpoint_dir / kValueCheckpoint;
    if (checkpoint_dir.empty() || !std::filesystem::exists(path)) {
      throw Error(std::string(method_name(m)) + " needs a value-function checkpoint (" +
                  path.string() + ")");
    }
    wv = load_checkpoint(path);
  }
  for (Method m : parsed) {
    if (m != Method::metricopt_learned || w_opt) continue;
    const auto path = checkpoint_dir / kOptimizerCheckpoint;
    if (!std::filesystem::exists(path)) {
      throw Error("metricopt-learned needs a learned-optimizer checkpoint (" + path.string() + ")");
    }
    w_opt = load_checkpoint(path);
  }

  const Pipeline p = prepare_pipeline(cfg);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  json manifest = manifest_json(cfg, "finetune");
  manifest["methods"] = methods;
  manifest["checkpoint_dir"] = checkpoint_dir.string();
  write_json(dir / "finetune_manifest.json", manifest);
  std::vector<ResultsRow> all;
  for (Method m : parsed) {
    auto rows = finetune_pipeline(p, m, wv ? &*wv : nullptr, w_opt ? &*w_opt : nullptr,
                                  dir / "logs");
    append_results(dir / "results.csv", rows);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

Summary cmd_report(const std::filesystem::path& results_dir) {
  const auto path = results_dir / "results.csv";
  if (!std::filesystem::exists(path)) throw Error("report: no results.csv in " + results_dir.string());
  const Summary s = summarize(read_results(path));
  std::ofstream csv(results_dir / "summary.csv");
  write_summary_csv(csv, s);
  std::ofstream txt(results_dir / "summary.txt");
  write_summary_text(txt, s);
  return s;
}

}  // namespace metricopt
