#include "metricopt/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "metricopt/error.hpp"

namespace metricopt {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* field) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError(std::string("results: bad ") + field + " '" + s + "'");
  }
  return v;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

bool ResultsRow::same_result(const ResultsRow& o) const {
  return run_id == o.run_id && seed == o.seed && method == o.method && metric == o.metric &&
         test_metric_raw == o.test_metric_raw && test_metric_oriented == o.test_metric_oriented &&
         test_loss == o.test_loss;
}

std::string results_header() {
  return "run_id,seed,method,metric,test_metric_raw,test_metric_oriented,test_loss,wall_time_s";
}

std::string format_row(const ResultsRow& r) {
  return r.run_id + "," + std::to_string(r.seed) + "," + r.method + "," + r.metric + "," +
         fmt(r.test_metric_raw) + "," + fmt(r.test_metric_oriented) + "," + fmt(r.test_loss) +
         "," + fmt(r.wall_time_s);
}

ResultsRow parse_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 8) throw FormatError("results: expected 8 columns in '" + line + "'");
  ResultsRow r;
  r.run_id = f[0];
  const auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.seed);
  if (ec != std::errc() || ptr != f[1].data() + f[1].size()) {
    throw FormatError("results: bad seed '" + f[1] + "'");
  }
  r.method = f[2];
  r.metric = f[3];
  r.test_metric_raw = parse_double(f[4], "test_metric_raw");
  r.test_metric_oriented = parse_double(f[5], "test_metric_oriented");
  r.test_loss = parse_double(f[6], "test_loss");
  r.wall_time_s = parse_double(f[7], "wall_time_s");
  return r;
}

void append_results(const std::filesystem::path& path, const std::vector<ResultsRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  if (fresh) out << results_header() << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
}

std::vector<ResultsRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<ResultsRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line == results_header()) continue;
    }
    rows.push_back(parse_row(line));
  }
  return rows;
}

Summary summarize(const std::vector<ResultsRow>& rows) {
  if (rows.empty()) throw Error("report: no results rows");
  Summary s;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ResultsRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.metric);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  s.baseline = groups.count({"loss-only", rows.front().metric}) ? "loss-only" : order.front().first;
  for (const auto& key : order) {
    const auto& g = groups[key];
    MethodSummary m;
    m.method = key.first;
    m.metric = key.second;
    m.n = g.size();
    std::vector<double> raw, oriented, loss;
    for (const auto* r : g) {
      raw.push_back(r->test_metric_raw);
      oriented.push_back(r->test_metric_oriented);
      loss.push_back(r->test_loss);
    }
    m.raw_mean = mean(raw);
    m.raw_std = sample_std(raw);
    m.oriented_mean = mean(oriented);
    m.oriented_std = sample_std(oriented);
    m.loss_mean = mean(loss);
    const auto base_it = groups.find({s.baseline, key.second});
    if (key.first != s.baseline && base_it != groups.end()) {
      std::map<std::uint64_t, const ResultsRow*> base_by_seed;
      for (const auto* r : base_it->second) base_by_seed[r->seed] = r;
      std::vector<double> deltas;
      for (const auto* r : g) {
        const auto b = base_by_seed.find(r->seed);
        if (b == base_by_seed.end()) continue;
        deltas.push_back(r->test_metric_raw - b->second->test_metric_raw);
        if (r->test_metric_oriented < b->second->test_metric_oriented) ++m.improved;
      }
      m.paired = deltas.size();
      if (!deltas.empty()) m.delta_raw_mean = mean(deltas);
    }
    s.methods.push_back(m);
  }
  return s;
}

void write_summary_csv(std::ostream& out, const Summary& s) {
  out << "method,metric,n,raw_mean,raw_std,oriented_mean,oriented_std,loss_mean,paired,"
         "delta_raw_mean,improved\n";
  for (const auto& m : s.methods) {
    out << m.method << ',' << m.metric << ',' << m.n << ',' << fmt(m.raw_mean) << ','
        << fmt(m.raw_std) << ',' << fmt(m.oriented_mean) << ',' << fmt(m.oriented_std) << ','
        << fmt(m.loss_mean) << ',' << m.paired << ','
        << (m.delta_raw_mean ? fmt(*m.delta_raw_mean) : std::string()) << ',' << m.improved
        << '\n';
  }
}

void write_summary_text(std::ostream& out, const Summary& s) {
  out << std::left << std::setw(20) << "method" << std::setw(11) << "metric" << std::setw(5)
      << "n" << std::setw(22) << "raw (mean +- std)" << std::setw(22) << "oriented (lower better)"
      << std::setw(12) << "loss" << "paired vs " << s.baseline << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& m : s.methods) {
    std::ostringstream raw, ori;
    raw << std::fixed << std::setprecision(4) << m.raw_mean << " +- " << m.raw_std;
    ori << std::fixed << std::setprecision(4) << m.oriented_mean << " +- " << m.oriented_std;
    out << std::setw(20) << m.method << std::setw(11) << m.metric << std::setw(5) << m.n
        << std::setw(22) << raw.str() << std::setw(22) << ori.str() << std::setw(12)
        << m.loss_mean;
    if (m.delta_raw_mean) {
      out << std::showpos << *m.delta_raw_mean << std::noshowpos << " (" << m.improved << "/"
          << m.paired << " improved)";
    } else {
      out << "-";
    }
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace metricopt
