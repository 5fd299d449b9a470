#pragma once

// Oracle and invariant suites shared by `metricopt selfcheck` and the
// acceptance runner.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace metricopt::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

const std::vector<std::string>& suite_names();

// Throws metricopt::Error for an unknown suite name.
CheckResult run_suite(std::string_view name, std::uint64_t seed = 20240601);

// Individual suites, also callable directly.
CheckResult check_autodiff(std::uint64_t seed, int models = 100);
CheckResult check_gp(std::uint64_t seed, int instances = 50);
CheckResult check_es_covariance(std::uint64_t seed, std::size_t samples = 100000);
CheckResult check_es_estimator(std::uint64_t seed, std::size_t pairs = 100000);
CheckResult check_plugin_equivalence(std::uint64_t seed, int steps = 100);
CheckResult check_value_loss_identities(std::uint64_t seed);
CheckResult check_fisher_sets();
CheckResult check_average_precision(std::uint64_t seed);
CheckResult check_simd(std::uint64_t seed);
CheckResult check_checkpoint(std::uint64_t seed);

}  // namespace metricopt::checks
