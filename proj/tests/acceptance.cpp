// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Criteria 1-7 reuse the selfcheck suites; 8-12 run the
// end-to-end reproductions below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metricopt/config.hpp"
#include "metricopt/experiment.hpp"
#include "metricopt/learned_optimizer.hpp"
#include "metricopt/meta_test.hpp"
#include "metricopt/simd.hpp"
#include "oracles.hpp"
#include "selfcheck.hpp"

using namespace metricopt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
  std::vector<std::string> notes;  // printed indented under the verdict
};

struct Options {
  fs::path workdir = fs::temp_directory_path() / "metricopt_acceptance";
  std::string a9a;
  std::vector<std::string> overrides;
  std::vector<double> lambda_grid{1.0, 10.0, 30.0, 100.0, 300.0};
  std::size_t selection_seeds = 10;
  std::uint64_t seed = 20240601;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---- criterion 8 configuration ---------------------------------------------

ExperimentConfig end_to_end_config(const Options& opt, MetricKind metric) {
  ExperimentConfig c;
  c.seed = 2024;
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  if (!opt.a9a.empty() && fs::exists(opt.a9a)) {
    c.data.source = "libsvm";
    c.data.path = opt.a9a;
    c.data.num_features = 123;
  }
  c.base.hidden = {100, 30, 10};
  c.adapter.dim = 16;
  c.task.metric = metric;
  c.task.horizon = 50;
  c.task.k_fraction = 0.05;
  c.task.phi_init_std = 1.0;
  c.task.sampling = BatchSampling::balanced;
  c.meta.iterations = 500;
  c.meta.replay = 8;
  c.value_leaky_slope = 0.01;
  c.finetune.methods = {"loss-only", "metricopt-sgd"};
  nlohmann::json doc = config_to_json(c);
  for (const auto& o : opt.overrides) apply_override(doc, o);
  c = config_from_json(doc);
  validate_config(c);
  return c;
}

struct EndToEnd {
  ExperimentConfig cfg;
  fs::path meta_dir, finetune_dir;
  MetaTrainOutcome meta;
  double lambda = 0.0;
  std::vector<ResultsRow> rows;
  Outcome verdict;
};

// Lambda is chosen on the validation split using finetuning seeds disjoint
// from the reported ones.
double select_lambda(const Options& opt, const ExperimentConfig& cfg, const ModelWeights& wv,
                     std::vector<std::string>& notes) {
  const Pipeline p = prepare_pipeline(cfg);
  const TaskSpec task = p.task();
  const MetricOracle val(task, Split::val);
  double best = opt.lambda_grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  std::string line = "lambda selection (mean validation metric, oriented):";
  for (double lambda : opt.lambda_grid) {
    MetaTestConfig mt;
    mt.es = cfg.es;
    mt.es.lambda = lambda;
    std::vector<double> scores;
    for (std::size_t j = 0; j < opt.selection_seeds; ++j) {
      const std::uint64_t s = derive_seed(cfg.seed, "select", j);
      const MetaTestResult r = run_meta_test(task, Method::metricopt_sgd, &wv, nullptr, mt, s);
      scores.push_back(val(r.phi).oriented);
    }
    const double score = mean_of(scores);
    line += " " + fmt("%g", lambda) + "->" + fmt("%.4f", score);
    if (score < best_score) {
      best_score = score;
      best = lambda;
    }
  }
  notes.push_back(line);
  return best;
}

EndToEnd run_end_to_end(const Options& opt, MetricKind metric) {
  EndToEnd e;
  const std::string tag(metric_name(metric));
  e.cfg = end_to_end_config(opt, metric);
  e.meta_dir = opt.workdir / ("e2e_" + tag) / "meta";
  e.finetune_dir = opt.workdir / ("e2e_" + tag) / "finetune";
  fs::remove_all(opt.workdir / ("e2e_" + tag));

  ExperimentConfig meta_cfg = e.cfg;
  meta_cfg.output_dir = e.meta_dir.string();
  const auto t0 = std::chrono::steady_clock::now();
  e.meta = cmd_meta_train(meta_cfg);
  const double meta_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  e.verdict.notes.push_back(
      tag + ": meta-training " + fmt("%.0fs", meta_secs) + ", held-out |f - M| " +
      fmt("%.4f", e.meta.report.initial_error) + " -> " + fmt("%.4f", e.meta.report.final_error));

  e.lambda = select_lambda(opt, e.cfg, e.meta.wv, e.verdict.notes);
  e.cfg.es.lambda = e.lambda;
  e.cfg.output_dir = e.finetune_dir.string();
  e.rows = cmd_finetune(e.cfg, e.meta_dir, e.cfg.finetune.methods);

  std::map<std::uint64_t, double> base, ours;
  std::map<std::uint64_t, double> base_raw, ours_raw;
  for (const auto& r : e.rows) {
    (r.method == "loss-only" ? base : ours)[r.seed] = r.test_metric_oriented;
    (r.method == "loss-only" ? base_raw : ours_raw)[r.seed] = r.test_metric_raw;
  }
  std::size_t wins = 0;
  std::vector<double> b, o, br, orw;
  for (const auto& [s, v] : base) {
    b.push_back(v);
    o.push_back(ours.at(s));
    br.push_back(base_raw.at(s));
    orw.push_back(ours_raw.at(s));
    if (ours.at(s) < v) ++wins;
  }
  const double mb = mean_of(b), mo = mean_of(o);
  e.verdict.passed = mo <= mb && wins >= 7;
  e.verdict.detail = tag + " loss-only " + fmt("%.4f", mean_of(br)) + " vs metricopt " +
                     fmt("%.4f", mean_of(orw)) + " (lambda " + fmt("%g", e.lambda) + "), " +
                     std::to_string(wins) + "/" + std::to_string(b.size()) + " strict wins";
  return e;
}

// ---- criterion 9 -------------------------------------------------------------

Outcome oe_ablation(const Options& opt) {
  Outcome out;
  std::size_t ok = 0;
  std::string errs;
  for (std::uint64_t pair = 1; pair <= 5; ++pair) {
    ExperimentConfig c;
    c.seed = derive_seed(opt.seed, "ablation", pair);
    c.data.n = 3000;
    c.base.hidden = {100, 30, 10};
    c.pretrain.steps = 1000;
    c.task.horizon = 50;
    c.task.k_fraction = 0.05;
    c.task.phi_init_std = 1.0;
    c.meta.iterations = 100;
    c.meta.heldout_tasks = 5;
    c.meta.replay = 8;
    c.value_leaky_slope = 0.01;
    nlohmann::json doc = config_to_json(c);
    for (const auto& o : opt.overrides) {
      if (o.rfind("task.metric", 0) != 0) apply_override(doc, o);
    }
    c = config_from_json(doc);
    const Pipeline p = prepare_pipeline(c);
    const MetaTrainOutcome m = meta_train_pipeline(p, true);
    const double with_oe = m.report.final_error;
    const double without = m.no_oe_report->final_error;
    if (with_oe <= without) ++ok;
    errs += (errs.empty() ? "" : ", ") + fmt("%.4f", with_oe) + "/" + fmt("%.4f", without);
  }
  out.passed = ok >= 4;
  out.detail = std::to_string(ok) + "/5 pairs with L_oe error <= without; with/without: " + errs;
  return out;
}

// ---- criterion 10 ------------------------------------------------------------

double embedding_spearman(const ModelWeights& wv, const TrainingSequence& seq) {
  std::vector<std::vector<double>> emb;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const auto row = seq.phi.data().subspan(t * seq.phi.cols(), seq.phi.cols());
    emb.push_back(embed(wv, row));
  }
  std::vector<double> dist, gap;
  for (std::size_t t = 0; t < emb.size(); ++t) {
    for (std::size_t u = t + 1; u < emb.size(); ++u) {
      double s = 0.0;
      for (std::size_t j = 0; j < emb[t].size(); ++j) s += std::pow(emb[t][j] - emb[u][j], 2);
      dist.push_back(std::sqrt(s));
      gap.push_back(std::abs(seq.mean[t] - seq.mean[u]));
    }
  }
  return oracle::spearman(dist, gap);
}

Outcome embedding_ordinality(const std::vector<const EndToEnd*>& runs) {
  Outcome out;
  out.passed = !runs.empty();
  for (const EndToEnd* e : runs) {
    const auto& held = e->meta.report.heldout;
    if (held.empty()) {
      out.passed = false;
      out.detail += "no held-out trajectory; ";
      continue;
    }
    const double rho = embedding_spearman(e->meta.wv, held.front());
    out.passed = out.passed && rho > 0.3;
    out.detail += std::string(metric_name(e->cfg.task.metric)) + " spearman " + fmt("%.4f", rho) + "; ";
  }
  return out;
}

// ---- criterion 11 ------------------------------------------------------------

UnrollProblem toy_problem(std::uint64_t seed, std::size_t horizon) {
  Rng rng(seed);
  UnrollProblem p;
  p.phi0 = {0.5 * standard_normal(rng), 0.5 * standard_normal(rng)};
  p.horizon = horizon;
  p.loss_grad = [](std::size_t, std::span<const double> phi, std::span<double> grad) {
    oracle::MismatchToy::loss_grad(phi.data(), grad.data());
    return oracle::MismatchToy::loss(phi.data());
  };
  return p;
}

double sgd_final(const UnrollProblem& p, const ValueQuery& f, double lr) {
  std::vector<double> phi = p.phi0, grad(phi.size());
  for (std::size_t t = 0; t < p.horizon; ++t) {
    p.loss_grad(t, phi, grad);
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= lr * grad[i];
  }
  return f(phi);
}

Outcome learned_optimizer(const Options& opt) {
  Outcome out;
  constexpr std::size_t kHorizon = 20;
  constexpr std::size_t kEvalProblems = 5;
  // The toy metric stands in for a value function that has been fit exactly.
  const ValueQuery f = [](std::span<const double> phi) {
    return oracle::MismatchToy::metric(phi.data());
  };
  LearnedOptTrainConfig cfg;
  cfg.iterations = 300;
  cfg.pairs = 8;
  cfg.lr = 0.03;
  std::vector<double> trained, untrained, sgd;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const std::uint64_t seed = derive_seed(opt.seed, "learned-toy", s);
    Rng init(derive_seed(seed, "init"));
    const ModelWeights w0 = init_learned_optimizer(init);
    const UnrollSampler sampler = [](std::uint64_t k) { return toy_problem(k, kHorizon); };
    const ModelWeights w = train_learned_optimizer(w0, sampler, f, cfg, seed);
    for (std::size_t k = 0; k < kEvalProblems; ++k) {
      const UnrollProblem p = toy_problem(derive_seed(seed, "eval", k), kHorizon);
      trained.push_back(unroll_learned_optimizer(w, p, f).metric.back());
      untrained.push_back(unroll_learned_optimizer(w0, p, f).metric.back());
      sgd.push_back(sgd_final(p, f, 0.05));
    }
  }
  const double mt = mean_of(trained), mu = mean_of(untrained), ms = mean_of(sgd);

  // Identities of the optimizer objective.
  const std::vector<double> flat(21, 0.3), loss(21, 0.7);
  std::vector<double> improving(21);
  for (std::size_t t = 0; t < improving.size(); ++t) improving[t] = 0.5 - 0.01 * t;
  const bool ln2 = std::abs(loss_learned_optimizer(flat, loss, 1.0) - std::log(2.0)) <= 1e-12;
  const bool zero_loss = loss_learned_optimizer(flat, loss, 0.0) == 0.0;
  const bool below = loss_learned_optimizer(improving, loss, 1.0) < std::log(2.0);

  out.passed = mt < mu && mt < ms && ln2 && zero_loss && below;
  out.detail = "mean final f: trained " + fmt("%.4f", mt) + ", untrained " + fmt("%.4f", mu) +
               ", loss-only SGD " + fmt("%.4f", ms) + "; identities " +
               (ln2 && zero_loss && below ? "hold" : "violated");
  return out;
}

// ---- criterion 12 ------------------------------------------------------------

Outcome replay(const Options& opt, const std::vector<const EndToEnd*>& runs) {
  Outcome out;
  out.passed = !runs.empty();
  std::size_t compared = 0;
  for (const EndToEnd* e : runs) {
    ExperimentConfig c = config_from_manifest(e->finetune_dir / "finetune_manifest.json");
    c.output_dir = (opt.workdir / ("replay_" + std::string(metric_name(e->cfg.task.metric)))).string();
    fs::remove_all(c.output_dir);
    const auto again = cmd_finetune(c, e->meta_dir, c.finetune.methods);
    bool same = again.size() == e->rows.size();
    for (std::size_t i = 0; same && i < again.size(); ++i) same = again[i].same_result(e->rows[i]);
    out.passed = out.passed && same;
    compared += again.size();
  }
  out.detail = std::to_string(compared) + " rows replayed from manifests, " +
               (out.passed ? "all bit-identical" : "MISMATCH");
  return out;
}

Outcome from_check(const checks::CheckResult& r) { return {r.passed, r.detail, {}}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  Options opt;
  std::set<int> only;
  app.add_option("--only", only, "Run only these criteria (1-12)");
  app.add_option("--workdir", opt.workdir, "Scratch directory for end-to-end runs");
  app.add_option("--a9a", opt.a9a, "LIBSVM a9a file; the synthetic task is used when absent");
  app.add_option("-s,--set", opt.overrides, "Config override for the end-to-end runs");
  app.add_option("--lambda-grid", opt.lambda_grid, "Candidate lambdas for validation selection");
  CLI11_PARSE(app, argc, argv);
  if (opt.a9a.empty()) {
    for (const char* candidate : {"data/a9a", "../data/a9a", "a9a"}) {
      if (fs::exists(candidate)) opt.a9a = candidate;
    }
  }

  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };
  bool all = true;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o.passed = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %-28s %7.1fs  %s\n", o.passed ? "PASS" : "FAIL", id, name.c_str(), secs,
                o.detail.c_str());
    for (const auto& n : o.notes) std::printf("       %s\n", n.c_str());
    std::fflush(stdout);
    all = all && o.passed;
  };

  std::printf("simd: %s, data: %s\n", std::string(simd::isa_name(simd::active().isa)).c_str(),
              opt.a9a.empty() ? "synthetic fallback" : opt.a9a.c_str());
  report(1, "autodiff oracle", [&] { return from_check(checks::check_autodiff(opt.seed)); });
  report(2, "GP oracle", [&] { return from_check(checks::check_gp(opt.seed)); });
  report(3, "guided-ES covariance", [&] { return from_check(checks::check_es_covariance(opt.seed)); });
  report(4, "ES estimator", [&] { return from_check(checks::check_es_estimator(opt.seed)); });
  report(5, "plug-in equivalence", [&] { return from_check(checks::check_plugin_equivalence(opt.seed)); });
  report(6, "value loss identities",
         [&] { return from_check(checks::check_value_loss_identities(opt.seed)); });
  report(7, "Fisher sets", [&] { return from_check(checks::check_fisher_sets()); });

  std::vector<EndToEnd> e2e;
  const bool need_e2e = wanted(8) || wanted(10) || wanted(12);
  report(8, "end-to-end vs loss-only", [&] {
    Outcome o;
    if (!need_e2e) return o;
    o.passed = true;
    for (MetricKind m : {MetricKind::mcr, MetricKind::f_measure}) {
      e2e.push_back(run_end_to_end(opt, m));
      const Outcome& v = e2e.back().verdict;
      o.passed = o.passed && v.passed;
      o.detail += (o.detail.empty() ? "" : " | ") + v.detail;
      o.notes.insert(o.notes.end(), v.notes.begin(), v.notes.end());
    }
    return o;
  });
  if (!wanted(8) && need_e2e) {
    for (MetricKind m : {MetricKind::mcr, MetricKind::f_measure}) e2e.push_back(run_end_to_end(opt, m));
  }
  std::vector<const EndToEnd*> runs;
  for (const auto& e : e2e) runs.push_back(&e);

  report(9, "ordinal-embedding ablation", [&] { return oe_ablation(opt); });
  report(10, "embedding ordinality", [&] { return embedding_ordinality(runs); });
  report(11, "learned optimizer toy", [&] { return learned_optimizer(opt); });
  report(12, "manifest replay", [&] { return replay(opt, runs); });
  return all ? 0 : 1;
}
