#include "metricopt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "metricopt/error.hpp"

namespace metricopt {

std::vector<std::size_t> LabeledDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (features.rank() != 2 || features.rows() != labels.size() || splits.size() != labels.size()) {
    throw ShapeError("dataset: features, labels and splits disagree in length");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw FormatError("dataset: labels must be binary");
  }
  for (Split s : {Split::train, Split::val, Split::test}) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (splits[i] != s) continue;
      (labels[i] == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) {
      throw Error("dataset: split " + std::to_string(static_cast<int>(s)) +
                  " does not contain both classes");
    }
  }
}

void assign_splits(LabeledDataset& data, std::uint64_t seed, const SplitFractions& fractions) {
  const std::size_t n = data.size();
  Rng rng(derive_seed(seed, "split"));
  const auto order = sample_without_replacement(n, n, rng);
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * static_cast<double>(n)));
  data.splits.assign(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    data.splits[order[i]] = s;
  }
}

LabeledDataset generate_synthetic_task(double class_imbalance, std::size_t n, std::size_t p,
                                       std::uint64_t seed, double separation) {
  if (!(class_imbalance > 0.0 && class_imbalance <= 0.5)) {
    throw Error("synthetic task: class imbalance must lie in (0, 0.5]");
  }
  if (n < 100) throw Error("synthetic task: need at least 100 examples");
  if (p == 0) throw Error("synthetic task: need at least one feature");
  Rng rng(derive_seed(seed, "synthetic"));
  std::vector<double> direction = normal_vector(p, 1.0, rng);
  double norm = 0.0;
  for (double v : direction) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : direction) v /= norm;

  LabeledDataset data;
  data.features = Tensor::matrix(n, p);
  data.labels.resize(n);
  std::bernoulli_distribution coin(class_imbalance);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = coin(rng) ? 1 : 0;
    data.labels[i] = y;
    const double offset = (y == 1 ? 0.5 : -0.5) * separation;
    auto row = data.features.row_span(i);
    fill_normal(row, 1.0, rng);
    for (std::size_t j = 0; j < p; ++j) row[j] += offset * direction[j];
  }
  assign_splits(data, seed);
  return data;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw FormatError("libsvm line " + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    parse_fail(line, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

LabeledDataset parse_libsvm(std::istream& in, std::optional<std::size_t> num_features,
                            std::uint64_t split_seed) {
  struct Row {
    int label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Row> rows;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line
    const double label = parse_number(tok, line_no);
    Row row;
    if (label == 1.0) {
      row.label = 1;
    } else if (label == -1.0 || label == 0.0) {
      row.label = 0;
    } else {
      parse_fail(line_no, "non-binary label '" + tok + "'");
    }
    std::size_t prev = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0) parse_fail(line_no, "expected idx:val, got '" + tok + "'");
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + colon, idx);
      if (ec != std::errc() || ptr != tok.data() + colon || idx == 0) {
        parse_fail(line_no, "bad feature index in '" + tok + "'");
      }
      if (idx <= prev) parse_fail(line_no, "feature indices must be ascending");
      if (num_features && idx > *num_features) {
        parse_fail(line_no, "feature index " + std::to_string(idx) + " exceeds " +
                                std::to_string(*num_features));
      }
      prev = idx;
      const double v = parse_number(std::string_view(tok).substr(colon + 1), line_no);
      row.entries.emplace_back(idx, v);
    }
    max_index = std::max(max_index, prev);
    rows.push_back(std::move(row));
  }
  const std::size_t p = num_features.value_or(max_index);
  if (p == 0) throw FormatError("libsvm: no features");

  LabeledDataset data;
  data.features = Tensor::matrix(rows.size(), p);
  data.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.labels[i] = rows[i].label;
    for (const auto& [idx, v] : rows[i].entries) data.features(i, idx - 1) = v;
  }
  assign_splits(data, split_seed);
  return data;
}

LabeledDataset load_libsvm(const std::filesystem::path& path,
                           std::optional<std::size_t> num_features, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open libsvm file " + path.string());
  return parse_libsvm(in, num_features, split_seed);
}

namespace {

constexpr char kCacheMagic[8] = {'M', 'O', 'P', 'T', 'D', 'S', '0', '1'};

template <typename T>
void write_raw(std::ostream& out, const T* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
}

template <typename T>
void read_raw(std::istream& in, T* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
  if (!in) throw FormatError("dataset cache: truncated file");
}

}  // namespace

void save_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset cache " + path.string());
  out.write(kCacheMagic, sizeof(kCacheMagic));
  const std::uint64_t dims[2] = {data.size(), data.num_features()};
  write_raw(out, dims, 2);
  write_raw(out, data.features.data().data(), data.features.size());
  std::vector<std::int32_t> labels(data.labels.begin(), data.labels.end());
  write_raw(out, labels.data(), labels.size());
  write_raw(out, data.splits.data(), data.splits.size());
}

LabeledDataset load_dataset_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read dataset cache " + path.string());
  char magic[8];
  read_raw(in, magic, 8);
  if (std::memcmp(magic, kCacheMagic, 8) != 0) throw FormatError("dataset cache: bad magic");
  std::uint64_t dims[2];
  read_raw(in, dims, 2);
  LabeledDataset data;
  data.features = Tensor::matrix(dims[0], dims[1]);
  read_raw(in, data.features.data().data(), data.features.size());
  std::vector<std::int32_t> labels(dims[0]);
  read_raw(in, labels.data(), labels.size());
  data.labels.assign(labels.begin(), labels.end());
  data.splits.resize(dims[0]);
  read_raw(in, data.splits.data(), data.splits.size());
  return data;
}

Batch gather(const LabeledDataset& data, std::span<const std::size_t> rows) {
  Batch b;
  const std::size_t p = data.num_features();
  b.x = Tensor::matrix(rows.size(), p);
  b.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = data.features.row_span(rows[i]);
    std::copy(src.begin(), src.end(), b.x.row_span(i).begin());
    b.y[i] = data.labels[rows[i]];
  }
  return b;
}

BalancedSampler::BalancedSampler(const LabeledDataset& data, Split split) {
  for (std::size_t i : data.indices(split)) {
    (data.labels[i] == 1 ? positives_ : negatives_).push_back(i);
  }
  if (positives_.empty() || negatives_.empty()) {
    throw Error("balanced sampler: split lacks one of the classes");
  }
}

std::vector<std::size_t> BalancedSampler::sample(std::size_t batch_size, Rng& rng) const {
  const std::size_t n_pos = (batch_size + 1) / 2;
  const std::size_t n_neg = batch_size / 2;
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  auto draw = [&](const std::vector<std::size_t>& pool, std::size_t k) {
    if (k <= pool.size()) {
      for (std::size_t j : sample_without_replacement(pool.size(), k, rng)) out.push_back(pool[j]);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t j = 0; j < k; ++j) out.push_back(pool[pick(rng)]);
    }
  };
  draw(positives_, n_pos);
  draw(negatives_, n_neg);
  return out;
}

}  // namespace metricopt
