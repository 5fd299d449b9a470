// metricopt: meta-train a value function, finetune with it, summarize results,
// inspect metric interpolation and run the built-in oracle suites.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metricopt/config.hpp"
#include "metricopt/error.hpp"
#include "metricopt/experiment.hpp"
#include "metricopt/gp.hpp"
#include "metricopt/report.hpp"
#include "metricopt/simd.hpp"
#include "selfcheck.hpp"

namespace {

using nlohmann::json;
using namespace metricopt;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
};

json base_document(const GlobalOptions& g, const std::string& manifest_path) {
  json doc;
  if (!manifest_path.empty()) {
    doc = config_to_json(config_from_manifest(manifest_path));
  } else if (!g.config_path.empty()) {
    doc = config_to_json(load_config(g.config_path));
  } else {
    doc = config_to_json(ExperimentConfig{});
  }
  for (const auto& o : g.overrides) apply_override(doc, o);
  return doc;
}

ExperimentConfig resolve_config(const GlobalOptions& g, const std::string& manifest_path = {}) {
  const ExperimentConfig cfg = config_from_json(base_document(g, manifest_path));
  validate_config(cfg);
  return cfg;
}

// "12:0.31,25:0.28" -> observations
std::vector<Observation> parse_observations(const std::string& text) {
  std::vector<Observation> obs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw FormatError("observation '" + item + "' is not step:value");
    try {
      obs.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw FormatError("observation '" + item + "' is not numeric");
    }
  }
  if (obs.empty()) throw FormatError("no observations given");
  return obs;
}

int run_gp_check(const std::string& observations, std::size_t horizon,
                 std::optional<double> length, std::optional<double> noise) {
  const auto obs = parse_observations(observations);
  RBFParams params = select_hyperparams(obs, static_cast<double>(horizon));
  if (length) params.length_scale = *length;
  if (noise) params.noise_var = *noise;
  std::vector<double> steps;
  for (std::size_t t = 1; t <= horizon; ++t) steps.push_back(static_cast<double>(t));
  const InterpolatedTrace trace = gp_posterior(obs, params, steps);
  std::printf("# length_scale=%.17g signal_var=%.17g noise_var=%.17g\n", params.length_scale,
              params.signal_var, params.noise_var);
  std::printf("t,mean,std\n");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::printf("%zu,%.17g,%.17g\n", i + 1, trace.mean[i], trace.std[i]);
  }
  return 0;
}

int run_selfcheck(std::vector<std::string> suites, std::uint64_t seed) {
  if (suites.empty()) suites = checks::suite_names();
  std::printf("simd: %s\n", std::string(simd::isa_name(simd::active().isa)).c_str());
  bool all = true;
  for (const auto& name : suites) {
    const checks::CheckResult r = checks::run_suite(name, seed);
    std::printf("[%s] %-22s %6.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-driven finetuning with a meta-learned value function"};
  app.require_subcommand(0, 1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("-s,--set", g.overrides, "Override a config key, e.g. task.metric=f_measure")
      ->take_all()
      ->allow_extra_args(false);
  app.add_flag("--print-config", g.print_config, "Print the resolved config and exit");

  auto* meta = app.add_subcommand("meta-train", "Meta-train the value function");
  bool compare_oe = false;
  meta->add_flag("--compare-oe", compare_oe,
                 "Also train without the ordinal-embedding term and report both errors");

  auto* finetune = app.add_subcommand("finetune", "Finetune fresh adapters with each method");
  std::string checkpoint_dir, manifest_path;
  std::vector<std::string> methods;
  finetune->add_option("--checkpoint", checkpoint_dir, "Directory written by meta-train");
  finetune->add_option("--methods", methods, "Methods to run (default: finetune.methods)");
  finetune->add_option("--manifest", manifest_path,
                       "Replay a previous finetune run from its manifest")
      ->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Summarize results.csv");
  std::string results_dir;
  report->add_option("--results", results_dir, "Directory holding results.csv")->required();

  auto* gp = app.add_subcommand("gp-check", "Interpolate sparse metric observations");
  std::string observations;
  std::size_t horizon = 50;
  std::optional<double> length, noise;
  gp->add_option("--obs", observations, "Observations as step:value,step:value")->required();
  gp->add_option("-T,--horizon", horizon, "Query steps 1..T")->check(CLI::PositiveNumber);
  gp->add_option("--length-scale", length, "Fix the RBF length scale");
  gp->add_option("--noise-var", noise, "Fix the observation noise variance");

  auto* selfcheck = app.add_subcommand("selfcheck", "Run the oracle and invariant suites");
  std::vector<std::string> suites;
  std::uint64_t check_seed = 20240601;
  selfcheck->add_option("--suite", suites, "Suites to run (default: all)")
      ->check(CLI::IsMember(metricopt::checks::suite_names()));
  selfcheck->add_option("--seed", check_seed, "Seed for the randomized suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.print_config) {
      std::cout << base_document(g, manifest_path).dump(2) << "\n";
      return 0;
    }
    if (*meta) {
      const ExperimentConfig cfg = resolve_config(g);
      const MetaTrainOutcome out = cmd_meta_train(cfg, compare_oe);
      std::cout << meta_report_json(out).dump(2) << "\n";
      return 0;
    }
    if (*finetune) {
      ExperimentConfig cfg = resolve_config(g, manifest_path);
      if (!manifest_path.empty()) {
        std::ifstream in(manifest_path);
        const json m = json::parse(in);
        if (methods.empty() && m.contains("methods")) methods = m["methods"].get<std::vector<std::string>>();
        if (checkpoint_dir.empty() && m.contains("checkpoint_dir")) {
          checkpoint_dir = m["checkpoint_dir"].get<std::string>();
        }
      }
      if (methods.empty()) methods = cfg.finetune.methods;
      const auto rows = cmd_finetune(cfg, checkpoint_dir, methods);
      std::cout << results_header() << "\n";
      for (const auto& r : rows) std::cout << format_row(r) << "\n";
      return 0;
    }
    if (*report) {
      const Summary s = cmd_report(results_dir);
      write_summary_text(std::cout, s);
      return 0;
    }
    if (*gp) return run_gp_check(observations, horizon, length, noise);
    if (*selfcheck) return run_selfcheck(suites, check_seed);
    std::cout << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
