#pragma once

// Results rows of finetuning runs and the per-method summary built from them.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace metricopt {

struct ResultsRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string method;
  std::string metric;
  double test_metric_raw = 0.0;       // conventional orientation
  double test_metric_oriented = 0.0;  // lower is better
  double test_loss = 0.0;
  double wall_time_s = 0.0;

  // Equality of every field except the wall time.
  bool same_result(const ResultsRow& other) const;
};

std::string results_header();
std::string format_row(const ResultsRow& row);
ResultsRow parse_row(const std::string& line);

// Appends rows, writing the header first when the file is new or empty.
void append_results(const std::filesystem::path& path, const std::vector<ResultsRow>& rows);
std::vector<ResultsRow> read_results(const std::filesystem::path& path);

struct MethodSummary {
  std::string method;
  std::string metric;
  std::size_t n = 0;
  double raw_mean = 0.0;
  double raw_std = 0.0;  // sample standard deviation (n - 1), 0 for a single row
  double oriented_mean = 0.0;
  double oriented_std = 0.0;
  double loss_mean = 0.0;
  // Against the baseline method on seeds both share.
  std::size_t paired = 0;
  std::optional<double> delta_raw_mean;  // method - baseline
  std::size_t improved = 0;              // seeds where the oriented metric is strictly lower
};

struct Summary {
  std::string baseline;
  std::vector<MethodSummary> methods;
};

// Baseline is loss-only when present, otherwise the first method seen.
// Rows are grouped per (method, metric). Throws Error on an empty input.
Summary summarize(const std::vector<ResultsRow>& rows);

void write_summary_csv(std::ostream& out, const Summary& s);
void write_summary_text(std::ostream& out, const Summary& s);

}  // namespace metricopt
