#include "metricopt/meta_test.hpp"

#include <cmath>
#include <string>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

namespace {

constexpr std::pair<Method, std::string_view> kMethods[] = {
    {Method::loss_only, "loss-only"},
    {Method::metricopt_sgd, "metricopt-sgd"},
    {Method::metricopt_adam, "metricopt-adam"},
    {Method::metricopt_learned, "metricopt-learned"},
    {Method::metric_only, "metric-only"},
};

double l2(std::span<const double> v) { return std::sqrt(simd::squared_norm(v)); }

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethods) {
    if (method == m) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethods) {
    if (n == name) return method;
  }
  throw FormatError("unknown method '" + std::string(name) + "'");
}

bool needs_value_function(Method m) { return m != Method::loss_only; }

MetaTestResult run_meta_test(const TaskSpec& task, Method method, const ModelWeights* wv,
                             const ModelWeights* w_opt, const MetaTestConfig& cfg,
                             std::uint64_t seed) {
  task.validate();
  cfg.es.validate();
  if (needs_value_function(method) && !wv) {
    throw Error(std::string(method_name(method)) + " needs a value-function checkpoint");
  }
  if (method == Method::metricopt_learned && !w_opt) {
    throw Error("metricopt-learned needs a learned-optimizer checkpoint");
  }
  if (wv && wv->spec().input_dim() != task.adapter.dim) {
    throw ShapeError("value function input dim does not match the adapter");
  }

  Rng phi_rng(derive_seed(seed, "phi0"));
  std::vector<double> phi = init_phi(task.adapter.dim, task.phi_init_std, phi_rng);
  const TaskBatches batches(task, seed);
  std::optional<MetricOracle> monitor;
  if (cfg.metric_every > 0) monitor.emplace(MetricOracle::for_task(task));

  MetaTestResult result;
  ValueQuery f;
  if (wv) {
    f = [wv, &result](std::span<const double> p) {
      ++result.value_queries;
      return predict(*wv, p);
    };
  }

  MetricOptConfig mo;
  mo.es = cfg.es;
  if (method == Method::metricopt_adam) mo.base = BaseOptimizer::adam;
  if (method == Method::metric_only) mo.mode = CombineMode::metric_only;
  MetricOptState state(phi.size(), mo, seed);
  PhiStepper learned;
  if (method == Method::metricopt_learned) learned = make_learned_stepper(*w_opt, *wv);

  for (std::size_t t = 0; t < task.horizon; ++t) {
    const LossAndGrad lg = batches.loss_grad(t, phi);
    if (!std::isfinite(lg.loss)) throw NumericError("finetuning loss diverged");
    StepRecord rec;
    rec.t = t;
    rec.loss = lg.loss;
    rec.grad_norm = l2(lg.grad);
    if (monitor && t % cfg.metric_every == 0) rec.metric = (*monitor)(phi).oriented;
    switch (method) {
      case Method::loss_only:
        sgd_step(phi, lg.grad, task.task_lr);
        break;
      case Method::metricopt_learned:
        learned(t, phi, lg.grad, lg.loss);
        break;
      default: {
        const double lr = method == Method::metricopt_adam ? cfg.adam_lr : task.task_lr;
        rec.u_norm = metricopt_step(state, phi, lg.grad, f, lr).u_norm;
      }
    }
    result.steps.push_back(rec);
  }

  result.phi = phi;
  result.test_metric = MetricOracle(task, Split::test)(phi);
  const Batch test = gather(*task.data, task.data->indices(Split::test));
  result.test_loss = cross_entropy_phi_grad(*task.theta, task.adapter, phi, test.x, test.y).loss;
  return result;
}

}  // namespace metricopt
