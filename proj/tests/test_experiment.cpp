#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "metricopt/config.hpp"
#include "metricopt/error.hpp"
#include "metricopt/experiment.hpp"
#include "metricopt/report.hpp"
#include "oracles.hpp"

using namespace metricopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("metricopt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.seed = 17;
  c.seeds = {1, 2, 3};
  c.output_dir = out.string();
  c.data.n = 400;
  c.data.p = 5;
  c.base.hidden = {8};
  c.pretrain.steps = 30;
  c.adapter.dim = 4;
  c.task.horizon = 10;
  c.task.k_fraction = 0.3;
  c.task.batch_size = 16;
  c.meta.iterations = 2;
  c.meta.heldout_tasks = 1;
  c.value.steps = 3;
  return c;
}

ResultsRow row(const std::string& method, std::uint64_t seed, double raw, double oriented) {
  ResultsRow r;
  r.run_id = method + "-" + std::to_string(seed);
  r.seed = seed;
  r.method = method;
  r.metric = "mcr";
  r.test_metric_raw = raw;
  r.test_metric_oriented = oriented;
  r.test_loss = 0.1 * static_cast<double>(seed);
  r.wall_time_s = 0.5;
  return r;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  ExperimentConfig c = tiny_config("somewhere");
  c.task.metric = MetricKind::f_measure;
  c.finetune.methods = {"loss-only", "metricopt-adam"};
  const nlohmann::json j = config_to_json(c);
  const ExperimentConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.task.metric == MetricKind::f_measure);
  CHECK(back.seeds == c.seeds);
  // An empty document gives the defaults.
  CHECK(config_to_json(config_from_json(nlohmann::json::object())) ==
        config_to_json(ExperimentConfig{}));
}

TEST_CASE("overrides and rejected documents name the key") {
  nlohmann::json doc = config_to_json(ExperimentConfig{});
  apply_override(doc, "task.metric=f_measure");
  apply_override(doc, "meta.iterations=7");
  apply_override(doc, "seeds=[4,5]");
  const ExperimentConfig c = config_from_json(doc);
  CHECK(c.task.metric == MetricKind::f_measure);
  CHECK(c.meta.iterations == 7);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK_THROWS_AS(apply_override(doc, "no-equals-sign"), FormatError);

  auto message = [](const nlohmann::json& j) -> std::string {
    try {
      validate_config(config_from_json(j));
    } catch (const FormatError& e) {
      return e.what();
    }
    return {};
  };
  CHECK(message({{"task", {{"bogus", 1}}}}).find("task.bogus") != std::string::npos);
  CHECK(message({{"meta", {{"iterations", "many"}}}}).find("meta.iterations") != std::string::npos);
  const std::string many = message({{"task", {{"k_fraction", 0.0}}}, {"meta", {{"eta0", 2.0}}}});
  CHECK(many.find("task.k_fraction") != std::string::npos);
  CHECK(many.find("meta.eta0") != std::string::npos);
  CHECK(message({{"finetune", {{"methods", {"nope"}}}}}).find("nope") != std::string::npos);
  CHECK(message(nlohmann::json::object()).empty());
}

TEST_CASE("results rows round-trip through CSV") {
  const fs::path dir = scratch("csv");
  std::vector<ResultsRow> rows{row("loss-only", 1, 0.25, 0.25), row("metricopt-sgd", 1, 0.2, 0.2)};
  rows[0].test_metric_raw = 0.1 + 0.2;  // needs all 17 digits
  append_results(dir / "results.csv", rows);
  append_results(dir / "results.csv", {row("loss-only", 2, 0.3, 0.3)});
  const auto back = read_results(dir / "results.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[0].same_result(rows[0]));
  CHECK(back[0].test_metric_raw == rows[0].test_metric_raw);
  CHECK(back[1].same_result(rows[1]));
  CHECK(parse_row(format_row(rows[1])).same_result(rows[1]));
  CHECK_THROWS_AS(parse_row("a,b,c"), FormatError);
  ResultsRow slower = rows[0];
  slower.wall_time_s = 99.0;
  CHECK(slower.same_result(rows[0]));
  slower.test_loss += 1e-15;
  CHECK_FALSE(slower.same_result(rows[0]));
  fs::remove_all(dir);
}

TEST_CASE("summary statistics match an independent computation") {
  std::vector<ResultsRow> rows;
  const std::vector<double> base{0.30, 0.28, 0.35, 0.31};
  const std::vector<double> ours{0.29, 0.29, 0.33, 0.30};
  for (std::size_t i = 0; i < base.size(); ++i) {
    rows.push_back(row("metricopt-sgd", i + 1, ours[i], ours[i]));
    rows.push_back(row("loss-only", i + 1, base[i], base[i]));
  }
  const Summary s = summarize(rows);
  CHECK(s.baseline == "loss-only");
  REQUIRE(s.methods.size() == 2);
  const MethodSummary* m = nullptr;
  for (const auto& x : s.methods) {
    if (x.method == "metricopt-sgd") m = &x;
  }
  REQUIRE(m != nullptr);
  CHECK(m->n == 4);
  CHECK(m->raw_mean == doctest::Approx(0.3025).epsilon(1e-12));
  CHECK(m->raw_std == doctest::Approx(oracle::sample_std(ours)).epsilon(1e-12));
  CHECK(m->paired == 4);
  CHECK(m->improved == 3);
  REQUIRE(m->delta_raw_mean.has_value());
  CHECK(*m->delta_raw_mean == doctest::Approx(0.3025 - 0.31).epsilon(1e-12));

  const Summary single = summarize({row("loss-only", 1, 0.4, 0.4)});
  CHECK(single.methods[0].raw_std == 0.0);
  CHECK_THROWS_AS(summarize({}), Error);

  std::ostringstream csv, txt;
  write_summary_csv(csv, s);
  write_summary_text(txt, s);
  CHECK(csv.str().find("metricopt-sgd") != std::string::npos);
  CHECK(txt.str().find("loss-only") != std::string::npos);
}

TEST_CASE("zero meta iterations report an untrained value function") {
  const fs::path dir = scratch("untrained");
  ExperimentConfig c = tiny_config(dir);
  c.meta.iterations = 0;
  const MetaTrainOutcome out = cmd_meta_train(c);
  CHECK_FALSE(out.report.trained);
  CHECK(meta_report_json(out)["status"] == "untrained");
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("end to end: meta-train, finetune, report, replay") {
  const fs::path dir = scratch("e2e");
  const ExperimentConfig c = tiny_config(dir / "meta");
  const MetaTrainOutcome meta = cmd_meta_train(c);
  CHECK(meta.report.trained);
  CHECK(meta.report.completed == 2);
  for (const char* f : {"manifest.json", "meta_report.json"}) CHECK(fs::exists(dir / "meta" / f));

  ExperimentConfig ft = c;
  ft.output_dir = (dir / "ft").string();
  const std::vector<std::string> methods{"loss-only", "metricopt-sgd"};
  const auto rows = cmd_finetune(ft, dir / "meta", methods);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.test_metric_oriented >= 0.0);
    CHECK(r.test_metric_oriented <= 1.0);
  }
  CHECK(read_results(dir / "ft" / "results.csv").size() == 6);

  const Summary s = cmd_report(dir / "ft");
  CHECK(s.methods.size() == 2);
  CHECK(fs::exists(dir / "ft" / "summary.csv"));
  CHECK_THROWS_AS(cmd_report(dir / "nowhere"), Error);

  // Replaying from the manifest into another directory reproduces every row.
  ExperimentConfig replay = config_from_manifest(dir / "ft" / "finetune_manifest.json");
  replay.output_dir = (dir / "replay").string();
  const auto again = cmd_finetune(replay, dir / "meta", methods);
  REQUIRE(again.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(again[i].same_result(rows[i]));

  // The manifest lists the derived seeds of every finetuning run.
  std::ifstream in(dir / "ft" / "finetune_manifest.json");
  const nlohmann::json m = nlohmann::json::parse(in);
  CHECK(m["derived_seeds"]["finetune"].size() == 3);
  CHECK(m["methods"] == nlohmann::json(methods));
  fs::remove_all(dir);
}

TEST_CASE("methods that need a value function fail without a checkpoint") {
  const fs::path dir = scratch("nockpt");
  const ExperimentConfig c = tiny_config(dir);
  CHECK_THROWS_AS(cmd_finetune(c, dir / "missing", {"metricopt-sgd"}), Error);
  CHECK_THROWS_AS(cmd_finetune(c, {}, {"metricopt-adam"}), Error);
  const auto rows = cmd_finetune(c, {}, {"loss-only"});
  CHECK(rows.size() == 3);
  fs::remove_all(dir);
}
