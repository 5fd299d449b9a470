#include "metricopt/config.hpp"

#include <fstream>
#include <sstream>

#include "metricopt/error.hpp"

namespace metricopt {

using nlohmann::json;

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"source", c.data.source},         {"path", c.data.path},
               {"cache", c.data.cache},           {"num_features", c.data.num_features},
               {"imbalance", c.data.imbalance},   {"n", c.data.n},
               {"p", c.data.p},                   {"separation", c.data.separation}};
  j["base"] = {{"hidden", c.base.hidden},
               {"leaky_slope", c.base.leaky_slope},
               {"batchnorm", c.base.batchnorm},
               {"pretrain_steps", c.pretrain.steps},
               {"pretrain_batch", c.pretrain.batch_size},
               {"pretrain_lr", c.pretrain.lr}};
  j["adapter"] = {{"kind", adapter_name(c.adapter.kind)},
                  {"dim", c.adapter.dim},
                  {"film_layer", c.adapter.film_layer}};
  j["task"] = {{"metric", metric_name(c.task.metric)},
               {"T", c.task.horizon},
               {"k_fraction", c.task.k_fraction},
               {"batch_size", c.task.batch_size},
               {"sampling", batch_sampling_name(c.task.sampling)},
               {"lr", c.task.lr},
               {"phi_init_std", c.task.phi_init_std},
               {"schedule", schedule_name(c.task.schedule)},
               {"eval_split", eval_split_name(c.task.eval_split)},
               {"train_subset_size", c.task.train_subset_size}};
  j["value"] = {{"gamma", c.value.gamma},         {"use_oe", c.value.use_oe},
                {"anchors", c.value.anchors},     {"inner_steps", c.value.steps},
                {"inner_lr", c.value.lr},         {"batchnorm", c.value_batchnorm},
                {"leaky_slope", c.value_leaky_slope}};
  j["meta"] = {{"iterations", c.meta.iterations},
               {"eta0", c.meta.eta0},
               {"heldout_tasks", c.meta.heldout_tasks},
               {"max_consecutive_failures", c.meta.max_consecutive_failures},
               {"offline", c.meta.offline},
               {"learned_optimizer", c.meta.learned_optimizer},
               {"replay", c.meta.replay}};
  j["es"] = {{"k", c.es.k}, {"P", c.es.P}, {"s2", c.es.s2}, {"lambda", c.es.lambda}};
  j["finetune"] = {{"methods", c.finetune.methods},
                   {"adam_lr", c.finetune.adam_lr},
                   {"metric_every", c.finetune.metric_every}};
  j["learned"] = {{"iterations", c.learned.iterations},
                  {"pairs", c.learned.pairs},
                  {"variance", c.learned.variance},
                  {"lr", c.learned.lr},
                  {"lambda", c.learned.lambda}};
  return j;
}

namespace {

// Rejects keys absent from the defaults, recursing into objects.
void check_keys(const json& given, const json& defaults, const std::string& prefix) {
  if (!given.is_object()) throw FormatError("config: '" + prefix + "' must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw FormatError("config: unknown key '" + key + "'");
    if (defaults[it.key()].is_object()) check_keys(it.value(), defaults[it.key()], key);
  }
}

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) const {
    const json& node = section.empty() ? doc_.at(key) : doc_.at(section).at(key);
    try {
      out = node.get<T>();
    } catch (const json::exception&) {
      throw FormatError("config: '" + path(section, key) + "' has the wrong type (" +
                        std::string(node.type_name()) + ")");
    }
  }

  template <typename T, typename Parse>
  void get_enum(const std::string& section, const std::string& key, T& out, Parse parse) const {
    std::string text;
    get(section, key, text);
    try {
      out = parse(text);
    } catch (const Error& e) {
      throw FormatError("config: '" + path(section, key) + "': " + e.what());
    }
  }

 private:
  static std::string path(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }
  const json& doc_;
};

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  json doc = config_to_json(c);
  check_keys(j, doc, "");
  doc.merge_patch(j);
  const Reader r(doc);
  r.get("", "seed", c.seed);
  r.get("", "seeds", c.seeds);
  r.get("", "output_dir", c.output_dir);
  r.get("data", "source", c.data.source);
  r.get("data", "path", c.data.path);
  r.get("data", "cache", c.data.cache);
  r.get("data", "num_features", c.data.num_features);
  r.get("data", "imbalance", c.data.imbalance);
  r.get("data", "n", c.data.n);
  r.get("data", "p", c.data.p);
  r.get("data", "separation", c.data.separation);
  r.get("base", "hidden", c.base.hidden);
  r.get("base", "leaky_slope", c.base.leaky_slope);
  r.get("base", "batchnorm", c.base.batchnorm);
  r.get("base", "pretrain_steps", c.pretrain.steps);
  r.get("base", "pretrain_batch", c.pretrain.batch_size);
  r.get("base", "pretrain_lr", c.pretrain.lr);
  r.get_enum("adapter", "kind", c.adapter.kind, parse_adapter_kind);
  r.get("adapter", "dim", c.adapter.dim);
  r.get("adapter", "film_layer", c.adapter.film_layer);
  r.get_enum("task", "metric", c.task.metric, parse_metric_kind);
  r.get("task", "T", c.task.horizon);
  r.get("task", "k_fraction", c.task.k_fraction);
  r.get("task", "batch_size", c.task.batch_size);
  r.get_enum("task", "sampling", c.task.sampling, parse_batch_sampling);
  r.get("task", "lr", c.task.lr);
  r.get("task", "phi_init_std", c.task.phi_init_std);
  r.get_enum("task", "schedule", c.task.schedule, parse_schedule_kind);
  r.get_enum("task", "eval_split", c.task.eval_split, parse_eval_split);
  r.get("task", "train_subset_size", c.task.train_subset_size);
  r.get("value", "gamma", c.value.gamma);
  r.get("value", "use_oe", c.value.use_oe);
  r.get("value", "anchors", c.value.anchors);
  r.get("value", "inner_steps", c.value.steps);
  r.get("value", "inner_lr", c.value.lr);
  r.get("value", "batchnorm", c.value_batchnorm);
  r.get("value", "leaky_slope", c.value_leaky_slope);
  r.get("meta", "iterations", c.meta.iterations);
  r.get("meta", "eta0", c.meta.eta0);
  r.get("meta", "heldout_tasks", c.meta.heldout_tasks);
  r.get("meta", "max_consecutive_failures", c.meta.max_consecutive_failures);
  r.get("meta", "offline", c.meta.offline);
  r.get("meta", "learned_optimizer", c.meta.learned_optimizer);
  r.get("meta", "replay", c.meta.replay);
  r.get("es", "k", c.es.k);
  r.get("es", "P", c.es.P);
  r.get("es", "s2", c.es.s2);
  r.get("es", "lambda", c.es.lambda);
  r.get("finetune", "methods", c.finetune.methods);
  r.get("finetune", "adam_lr", c.finetune.adam_lr);
  r.get("finetune", "metric_every", c.finetune.metric_every);
  r.get("learned", "iterations", c.learned.iterations);
  r.get("learned", "pairs", c.learned.pairs);
  r.get("learned", "variance", c.learned.variance);
  r.get("learned", "lr", c.learned.lr);
  r.get("learned", "lambda", c.learned.lambda);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("config: cannot open " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError("config: " + path + ": " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw FormatError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object()) throw FormatError("config: '" + key + "' is not a nested key");
    node = &(*node)[part];
  }
  json value = json::parse(text, nullptr, false);
  *node = value.is_discarded() ? json(text) : std::move(value);
}

void validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  require(!c.seeds.empty(), "seeds: at least one seed is required");
  require(c.data.source == "synthetic" || c.data.source == "libsvm",
          "data.source: must be 'synthetic' or 'libsvm'");
  if (c.data.source == "synthetic") {
    require(c.data.imbalance > 0.0 && c.data.imbalance <= 0.5, "data.imbalance: must be in (0, 0.5]");
    require(c.data.n >= 100, "data.n: must be at least 100");
    require(c.data.p >= 1, "data.p: must be positive");
  }
  require(!c.base.hidden.empty(), "base.hidden: at least one hidden layer");
  require(c.base.leaky_slope > 0.0 && c.base.leaky_slope < 1.0, "base.leaky_slope: must be in (0, 1)");
  require(c.pretrain.batch_size >= 2, "base.pretrain_batch: must be at least 2");
  require(c.pretrain.lr > 0.0, "base.pretrain_lr: must be positive");
  require(c.adapter.dim >= 1, "adapter.dim: must be positive");
  if (c.adapter.kind == AdapterKind::film) {
    require(c.adapter.film_layer < c.base.hidden.size(), "adapter.film_layer: out of range");
    if (c.adapter.film_layer < c.base.hidden.size()) {
      require(c.adapter.dim == 2 * c.base.hidden[c.adapter.film_layer],
              "adapter.dim: FiLM needs twice the modulated layer width");
    }
  }
  require(c.task.horizon >= 1, "task.T: must be at least 1");
  require(c.task.k_fraction > 0.0 && c.task.k_fraction <= 1.0, "task.k_fraction: must be in (0, 1]");
  require(c.task.batch_size >= 2, "task.batch_size: must be at least 2");
  require(c.task.lr > 0.0, "task.lr: must be positive");
  require(c.task.phi_init_std >= 0.0, "task.phi_init_std: must be non-negative");
  require(c.value.gamma > 0.0, "value.gamma: must be positive");
  require(c.value.lr > 0.0, "value.inner_lr: must be positive");
  require(c.value.anchors >= 1, "value.anchors: must be positive");
  require(c.value_leaky_slope >= 0.0 && c.value_leaky_slope < 1.0,
          "value.leaky_slope: must be in [0, 1)");
  require(c.meta.eta0 >= 0.0 && c.meta.eta0 <= 1.0, "meta.eta0: must be in [0, 1]");
  require(c.meta.replay >= 1, "meta.replay: must be at least 1");
  require(c.meta.max_consecutive_failures >= 1, "meta.max_consecutive_failures: must be positive");
  require(c.es.k >= 1, "es.k: must be at least 1");
  require(c.es.P >= 1, "es.P: must be at least 1");
  require(c.es.s2 > 0.0, "es.s2: must be positive");
  require(c.es.lambda >= 0.0, "es.lambda: must be non-negative");
  require(!c.finetune.methods.empty(), "finetune.methods: at least one method");
  for (const auto& m : c.finetune.methods) {
    try {
      parse_method(m);
    } catch (const Error&) {
      errors.push_back("finetune.methods: unknown method '" + m + "'");
    }
  }
  require(c.finetune.adam_lr > 0.0, "finetune.adam_lr: must be positive");
  require(c.learned.pairs >= 1, "learned.pairs: must be positive");
  require(c.learned.variance > 0.0, "learned.variance: must be positive");
  require(c.learned.lr > 0.0, "learned.lr: must be positive");
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw FormatError(msg);
}

}  // namespace metricopt
