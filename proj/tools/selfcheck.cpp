#include "selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "metricopt/checkpoint.hpp"
#include "metricopt/error.hpp"
#include "metricopt/gp.hpp"
#include "metricopt/guided_es.hpp"
#include "metricopt/meta_test.hpp"
#include "metricopt/metrics.hpp"
#include "metricopt/mlp.hpp"
#include "metricopt/optim.hpp"
#include "metricopt/pretrain.hpp"
#include "metricopt/rng.hpp"
#include "metricopt/simd.hpp"
#include "metricopt/value_function.hpp"
#include "oracles.hpp"

namespace metricopt::checks {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <typename Fn>
CheckResult timed(std::string name, Fn&& body) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = std::move(name);
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// ---- autodiff ------------------------------------------------------------

struct GradCase {
  ModelWeights w;
  Tensor x;
  Mode mode = Mode::eval;
  std::optional<FilmModulation> film;
  Tensor upstream;
  std::optional<std::size_t> hidden_layer;
  Tensor hidden_upstream;
};

double sum_product(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double objective(const GradCase& c, const ModelWeights& w, const Tensor& x,
                 const FilmModulation* film) {
  const ForwardCache cache = forward_cached(w, x, c.mode, film);
  double s = sum_product(cache.output(), c.upstream);
  if (c.hidden_layer) s += sum_product(cache.hidden(*c.hidden_layer), c.hidden_upstream);
  return s;
}

// True when every hidden pre-activation is clear of the ReLU kink, so central
// differences with a small step stay on one linear piece.
bool away_from_kinks(const ModelWeights& w, const ForwardCache& cache, double margin) {
  for (std::size_t l = 0; l < w.spec().num_hidden(); ++l) {
    const LayerCache& lc = cache.layers[l];
    const bool bn = w.has_batchnorm(l);
    for (std::size_t r = 0; r < lc.pre.rows(); ++r) {
      for (std::size_t j = 0; j < lc.pre.cols(); ++j) {
        const double y = bn ? w.gamma(l)[j] * lc.normalized(r, j) + w.beta(l)[j] : lc.pre(r, j);
        if (std::abs(y) < margin) return false;
      }
    }
  }
  return true;
}

GradCase random_case(Rng& rng) {
  for (;;) {
    std::vector<std::size_t> sizes{uniform_int(rng, 2, 5)};
    const std::size_t hidden = uniform_int(rng, 1, 3);
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(uniform_int(rng, 2, 6));
    sizes.push_back(uniform_int(rng, 1, 3));
    const bool bn = uniform(rng, 0, 1) < 0.5;
    const Activation act = uniform(rng, 0, 1) < 0.5 ? Activation::relu : Activation::leaky_relu;
    const OutputActivation out =
        uniform(rng, 0, 1) < 0.3 ? OutputActivation::sigmoid : OutputActivation::identity;
    GradCase c;
    c.w = init_weights(make_spec(sizes, act, bn, out, 0.1), rng);
    for (double& p : c.w.params()) p += 0.3 * standard_normal(rng);
    for (std::size_t l = 0; l < hidden; ++l) {
      if (!c.w.has_batchnorm(l)) continue;
      for (double& m : c.w.running_mean(l)) m = 0.5 * standard_normal(rng);
      for (double& v : c.w.running_var(l)) v = uniform(rng, 0.5, 2.0);
    }
    const std::size_t batch = uniform_int(rng, 3, 5);
    c.x = Tensor::matrix(batch, sizes.front(), normal_vector(batch * sizes.front(), 1.0, rng));
    c.mode = bn && uniform(rng, 0, 1) < 0.7 ? Mode::train : Mode::eval;
    if (uniform(rng, 0, 1) < 0.5) {
      FilmModulation film;
      film.layer = uniform_int(rng, 0, hidden - 1);
      film.scale_delta = normal_vector(sizes[film.layer + 1], 0.3, rng);
      film.shift = normal_vector(sizes[film.layer + 1], 0.3, rng);
      c.film = std::move(film);
    }
    c.upstream = Tensor::matrix(batch, sizes.back(), normal_vector(batch * sizes.back(), 1.0, rng));
    if (uniform(rng, 0, 1) < 0.5) {
      const std::size_t l = uniform_int(rng, 0, hidden - 1);
      c.hidden_layer = l;
      c.hidden_upstream =
          Tensor::matrix(batch, sizes[l + 1], normal_vector(batch * sizes[l + 1], 1.0, rng));
    }
    const ForwardCache cache = forward_cached(c.w, c.x, c.mode, c.film ? &*c.film : nullptr);
    if (away_from_kinks(c.w, cache, 1e-3)) return c;
  }
}

// Central differences of `objective` along every coordinate of `target`,
// which must alias storage read by `eval`.
std::vector<double> central_differences(std::span<double> target,
                                        const std::function<double()>& eval, double h) {
  std::vector<double> g(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double keep = target[i];
    target[i] = keep + h;
    const double up = eval();
    target[i] = keep - h;
    const double down = eval();
    target[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

CheckResult check_autodiff(std::uint64_t seed, int models) {
  return timed("autodiff", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "autodiff"));
    constexpr double kStep = 1e-5;
    // Partials that are exactly zero (biases feeding a train-mode BatchNorm)
    // come back from central differences as rounding noise near 1e-10; the
    // floor keeps that noise from being read as a relative error.
    constexpr double kRelFloor = 1e-5;
    double worst = 0.0;
    std::size_t compared = 0;
    for (int m = 0; m < models; ++m) {
      GradCase c = random_case(rng);
      const FilmModulation* film = c.film ? &*c.film : nullptr;
      const ForwardCache cache = forward_cached(c.w, c.x, c.mode, film);
      std::vector<HiddenUpstream> extra;
      if (c.hidden_layer) extra.push_back({*c.hidden_layer, &c.hidden_upstream});
      const Gradients g = backward(c.w, cache, c.upstream, extra);

      ModelWeights w = c.w;
      Tensor x = c.x;
      std::optional<FilmModulation> f = c.film;
      auto eval = [&] { return objective(c, w, x, f ? &*f : nullptr); };
      auto compare = [&](const std::vector<double>& analytic, const std::vector<double>& numeric) {
        worst = std::max(worst, oracle::max_rel_error(analytic, numeric, kRelFloor));
        compared += analytic.size();
      };
      compare(g.params, central_differences(w.params(), eval, kStep));
      compare(g.input.values(), central_differences(x.data(), eval, kStep));
      if (f) {
        compare(g.film_scale, central_differences(f->scale_delta, eval, kStep));
        compare(g.film_shift, central_differences(f->shift, eval, kStep));
      }
    }
    r.passed = worst < 1e-4;
    r.detail = std::to_string(models) + " models, " + std::to_string(compared) +
               " partials, max rel error " + fmt("%.3g", worst) + " (limit 1e-4)";
  });
}

// ---- gaussian process ----------------------------------------------------

CheckResult check_gp(std::uint64_t seed, int instances) {
  return timed("gp", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "gp"));
    constexpr std::size_t kHorizon = 50;
    double worst = 0.0;
    std::size_t monotone_violations = 0;
    std::size_t bound_violations = 0;
    std::vector<double> queries;
    for (std::size_t q = 1; q <= kHorizon; ++q) queries.push_back(static_cast<double>(q));
    for (int i = 0; i < instances; ++i) {
      const std::size_t K = uniform_int(rng, 1, 10);
      auto idx = sample_without_replacement(kHorizon, K, rng);
      std::sort(idx.begin(), idx.end());
      std::vector<Observation> obs;
      std::vector<double> t, y;
      for (std::size_t s : idx) {
        obs.push_back({static_cast<double>(s + 1), uniform(rng, 0.0, 1.0)});
        t.push_back(obs.back().step);
        y.push_back(obs.back().value);
      }
      RBFParams params;
      params.length_scale = uniform(rng, 1.0, 25.0);
      params.signal_var = uniform(rng, 0.01, 1.0);
      params.noise_var = std::pow(10.0, uniform(rng, -4.0, -2.0));

      const InterpolatedTrace got = gp_posterior(obs, params, queries);
      const auto want = oracle::gp_direct(t, y, params.length_scale, params.signal_var,
                                          params.noise_var, queries, params.jitter);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        worst = std::max(worst, std::abs(got.raw_mean[q] - want[q].mean));
        worst = std::max(worst, std::abs(got.raw_var[q] - want[q].var));
        if (got.raw_var[q] > params.signal_var + params.noise_var) ++bound_violations;
        if (got.mean[q] < 0.0 || got.mean[q] > 1.0 || got.std[q] < kStdFloor) ++bound_violations;
      }
      // Monotone information: drop one observation and the variance may only grow.
      if (K >= 2) {
        const std::span<const Observation> fewer(obs.data(), K - 1);
        const InterpolatedTrace coarse = gp_posterior(fewer, params, queries);
        for (std::size_t q = 0; q < queries.size(); ++q) {
          if (got.raw_var[q] > coarse.raw_var[q] + 1e-12) ++monotone_violations;
        }
      }
    }
    r.passed = worst < 1e-8 && monotone_violations == 0 && bound_violations == 0;
    r.detail = std::to_string(instances) + " instances, max abs error " + fmt("%.3g", worst) +
               " (limit 1e-8), monotone violations " + std::to_string(monotone_violations) +
               ", bound violations " + std::to_string(bound_violations);
  });
}

// ---- guided ES -----------------------------------------------------------

namespace {

SubspaceBasis random_basis(std::size_t d, std::size_t k, Rng& rng) {
  GradientHistory history(k, d);
  for (std::size_t i = 0; i < k; ++i) history.push(normal_vector(d, 1.0, rng));
  return orthonormal_basis(history);
}

}  // namespace

CheckResult check_es_covariance(std::uint64_t seed, std::size_t samples) {
  return timed("es-covariance", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "es-covariance"));
    double worst_trace = 0.0;
    bool ranks_ok = true;
    for (std::size_t d : {2u, 8u, 32u}) {
      for (std::size_t k : {1u, 2u, 3u}) {
        const SubspaceBasis basis = random_basis(d, k, rng);
        ranks_ok = ranks_ok && basis.rank == std::min(k, d);
        const auto sigma = search_covariance(basis);
        double tr = 0.0;
        for (std::size_t i = 0; i < d; ++i) tr += sigma[i * d + i];
        worst_trace = std::max(worst_trace, std::abs(tr - 1.0));
      }
    }

    constexpr std::size_t d = 4;
    const SubspaceBasis basis = random_basis(d, 2, rng);
    const auto sigma = search_covariance(basis);
    GuidedESConfig cfg;
    cfg.s2 = 1.0;
    cfg.P = 1000;
    std::vector<double> mean(d, 0.0), second(d * d, 0.0);
    std::size_t n = 0;
    while (n < samples) {
      for (const auto& delta : sample_perturbations(basis, cfg, rng)) {
        for (std::size_t i = 0; i < d; ++i) {
          mean[i] += delta[i];
          for (std::size_t j = 0; j < d; ++j) second[i * d + j] += delta[i] * delta[j];
        }
        if (++n == samples) break;
      }
    }
    double worst_entry = 0.0;
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double cov = second[i * d + j] / dn - (mean[i] / dn) * (mean[j] / dn);
        worst_entry = std::max(worst_entry, std::abs(cov - sigma[i * d + j]));
      }
    }
    r.passed = worst_trace < 1e-12 && ranks_ok && worst_entry < 0.01;
    r.detail = "max |tr(Sigma) - 1| " + fmt("%.3g", worst_trace) +
               ", max covariance entry error " + fmt("%.4f", worst_entry) + " over " +
               std::to_string(n) + " samples (limit 0.01)";
  });
}

CheckResult check_es_estimator(std::uint64_t seed, std::size_t pairs) {
  return timed("es-estimator", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "es-estimator"));
    constexpr std::size_t d = 8;
    const SubspaceBasis basis = random_basis(d, 3, rng);
    const auto sigma = search_covariance(basis);
    const auto w = normal_vector(d, 1.0, rng);
    const auto phi = normal_vector(d, 1.0, rng);
    const ValueQuery linear = [&](std::span<const double> x) {
      double s = 0.25;
      for (std::size_t i = 0; i < d; ++i) s += w[i] * x[i];
      return s;
    };
    const ValueQuery constant = [](std::span<const double>) { return 0.375; };

    GuidedESConfig cfg;
    cfg.P = 1000;
    std::vector<double> total(d, 0.0);
    std::size_t used = 0;
    bool zero_for_constant = true;
    while (used < pairs) {
      const auto deltas = sample_perturbations(basis, cfg, rng);
      const auto u = es_direction(linear, phi, deltas, cfg.s2);
      for (std::size_t i = 0; i < d; ++i) total[i] += u[i];
      used += deltas.size();
      for (double v : es_direction(constant, phi, deltas, cfg.s2)) {
        zero_for_constant = zero_for_constant && v == 0.0;
      }
    }
    std::vector<double> expected(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) expected[i] += 2.0 * sigma[i * d + j] * w[j];
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += total[i] * expected[i];
      na += total[i] * total[i];
      nb += expected[i] * expected[i];
    }
    const double cosine = dot / std::sqrt(na * nb);
    r.passed = cosine > 0.99 && zero_for_constant;
    r.detail = std::to_string(used) + " antithetic pairs, cosine " + fmt("%.5f", cosine) +
               " (limit 0.99), constant f gives zero: " + (zero_for_constant ? "yes" : "no");
  });
}

// ---- plug-in equivalence -------------------------------------------------

namespace {

// Small synthetic task with a briefly pretrained base model.
TaskSpec tiny_task(std::uint64_t seed, std::size_t horizon) {
  auto data = std::make_shared<LabeledDataset>(
      generate_synthetic_task(0.3, 600, 6, derive_seed(seed, "data"), 2.0));
  AdapterConfig adapter;
  adapter.dim = 4;
  BaseModelConfig base;
  base.hidden = {12, 6};
  PretrainConfig pre;
  pre.steps = 60;
  pre.lr = 1e-2;
  auto theta = std::make_shared<ModelWeights>(pretrain_base_model(
      base_model_spec(data->num_features(), base, adapter), adapter, *data, pre,
      derive_seed(seed, "pretrain")));
  TaskSpec task;
  task.theta = theta;
  task.data = data;
  task.adapter = adapter;
  task.horizon = horizon;
  task.batch_size = 32;
  task.phi_init_std = 0.1;
  return task;
}

}  // namespace

CheckResult check_plugin_equivalence(std::uint64_t seed, int steps) {
  return timed("plugin-equivalence", [&](CheckResult& r) {
    // Two-dimensional toy with noisy gradients, compared iterate by iterate.
    Rng noise_a(derive_seed(seed, "plugin/noise")), noise_b(derive_seed(seed, "plugin/noise"));
    double phi_sgd[2] = {1.5, -0.75};
    double phi_mo[2] = {1.5, -0.75};
    MetricOptConfig mo;
    mo.es.lambda = 0.0;
    MetricOptState state(2, mo, derive_seed(seed, "plugin/es"));
    std::size_t f_calls = 0;
    const ValueQuery f = [&](std::span<const double> x) {
      ++f_calls;
      return oracle::MismatchToy::metric(x.data());
    };
    bool iterates_equal = true;
    for (int t = 0; t < steps; ++t) {
      double ga[2], gb[2];
      oracle::MismatchToy::loss_grad(phi_sgd, ga);
      oracle::MismatchToy::loss_grad(phi_mo, gb);
      for (int i = 0; i < 2; ++i) {
        ga[i] += 0.1 * standard_normal(noise_a);
        gb[i] += 0.1 * standard_normal(noise_b);
      }
      sgd_step(std::span<double>(phi_sgd, 2), std::span<const double>(ga, 2), 0.1);
      metricopt_step(state, std::span<double>(phi_mo, 2), std::span<const double>(gb, 2), f, 0.1);
      iterates_equal = iterates_equal && phi_sgd[0] == phi_mo[0] && phi_sgd[1] == phi_mo[1];
    }

    // Adapter finetuning on a real task, same seeds for both methods.
    const TaskSpec task = tiny_task(seed, static_cast<std::size_t>(steps));
    Rng init(derive_seed(seed, "plugin/value"));
    const ModelWeights wv = init_value_function(task.adapter.dim, init);
    MetaTestConfig cfg;
    cfg.es.lambda = 0.0;
    const std::uint64_t run_seed = derive_seed(seed, "plugin/run");
    const MetaTestResult base = run_meta_test(task, Method::loss_only, nullptr, nullptr, cfg, run_seed);
    const MetaTestResult plug =
        run_meta_test(task, Method::metricopt_sgd, &wv, nullptr, cfg, run_seed);
    bool task_equal = base.phi == plug.phi && base.steps.size() == plug.steps.size() &&
                      plug.value_queries == 0;
    for (std::size_t i = 0; task_equal && i < base.steps.size(); ++i) {
      task_equal = base.steps[i].loss == plug.steps[i].loss &&
                   base.steps[i].grad_norm == plug.steps[i].grad_norm;
    }
    r.passed = iterates_equal && f_calls == 0 && task_equal;
    r.detail = std::to_string(steps) + " steps; toy iterates bitwise equal: " +
               (iterates_equal && f_calls == 0 ? "yes" : "no") +
               ", adapter task bitwise equal: " + (task_equal ? "yes" : "no");
  });
}

// ---- value-function loss identities --------------------------------------

CheckResult check_value_loss_identities(std::uint64_t seed) {
  return timed("value-loss-identities", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "value-loss"));
    constexpr std::size_t d = 5, T = 12;
    const ModelWeights wv = init_value_function(d, rng);
    TrainingSequence seq;
    seq.phi = Tensor::matrix(T, d, normal_vector(T * d, 1.0, rng));
    // Rows 1 and 2 coincide so their embeddings are equidistant from any anchor.
    std::copy(seq.phi.row_span(1).begin(), seq.phi.row_span(1).end(), seq.phi.row_span(2).begin());
    for (std::size_t t = 0; t < T; ++t) seq.mean.push_back(uniform(rng, 0.0, 1.0));
    seq.std.assign(T, 0.037);

    const Tensor out = forward(wv, seq.phi, Mode::train);
    double abs_sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) abs_sum += std::abs(out(t, 0) - seq.mean[t]);
    const double mae = abs_sum / static_cast<double>(T);
    const ValueLoss equal = loss_value_function(wv, seq, {}, 10.0, true);
    const bool mae_exact = equal.regress == mae && equal.oe == 0.0;

    const std::vector<Triplet> tied{{0, 1, 2}, {5, 2, 1}, {7, 1, 2}};
    const ValueLoss oe = loss_value_function(wv, seq, tied, 10.0, true);
    const double oe_error = std::abs(oe.oe - std::log(2.0));

    for (double& s : seq.std) s = uniform(rng, 0.01, 0.2);
    const double before = loss_value_function(wv, seq, {}, 10.0, true).regress;
    for (double& s : seq.std) s *= 7.3;
    const double after = loss_value_function(wv, seq, {}, 10.0, true).regress;
    const double rescale_error = std::abs(before - after);

    r.passed = mae_exact && oe_error <= 1e-12 && rescale_error <= 1e-12;
    r.detail = std::string("equal std gives MAE exactly: ") + (mae_exact ? "yes" : "no") +
               ", |L_oe - ln 2| " + fmt("%.3g", oe_error) + ", rescaling change " +
               fmt("%.3g", rescale_error) + " (limits 1e-12)";
  });
}

CheckResult check_fisher_sets() {
  return timed("fisher-sets", [&](CheckResult& r) {
    const double r8 = fisher_ratio(0.5, 1.0, 4.5, 1.0);
    const double r0 = fisher_ratio(0.3, 0.2, 0.3, 0.1);
    const double r2 = fisher_ratio(0.0, 1.0, 2.0, 1.0);
    const bool values = r8 == 8.0 && r0 == 0.0 && r2 == 2.0;
    const bool sets = !in_positive_set(r8) && in_positive_set(r0) && !in_positive_set(r2);

    // The same boundary seen through triplet mining: step 1 ties with the
    // anchor, step 2 sits exactly at ratio 2 and must act as the negative.
    TrainingSequence seq;
    seq.phi = Tensor::matrix(3, 1);
    seq.mean = {0.0, 0.0, 2.0};
    seq.std = {1.0, 1.0, 1.0};
    Tensor emb = Tensor::matrix(3, 1, std::vector<double>{0.0, 1.0, 3.0});
    const std::size_t anchor = 0;
    const auto triplets = mine_triplets(seq, emb, std::span<const std::size_t>(&anchor, 1));
    const bool mined = triplets.size() == 1 && triplets[0] == Triplet{0, 1, 2};

    r.passed = values && sets && mined;
    r.detail = "r=8 negative, r=0 positive, r=2 negative: " +
               std::string(sets && values ? "yes" : "no") +
               ", mined triplet matches: " + (mined ? "yes" : "no");
  });
}

CheckResult check_average_precision(std::uint64_t seed) {
  return timed("aucpr", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "aucpr"));
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const std::size_t n = uniform_int(rng, 2, 40);
      std::vector<double> scores(n);
      std::vector<int> labels(n);
      // Coarse grid so ties are common.
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::round(uniform(rng, 0.0, 1.0) * 10.0) / 10.0;
        labels[j] = uniform(rng, 0.0, 1.0) < 0.4;
      }
      labels[0] = 1;
      labels[1] = 0;
      worst = std::max(worst, std::abs(average_precision(scores, labels) -
                                       oracle::average_precision(scores, labels)));
    }
    r.passed = worst <= 1e-12;
    r.detail = "200 tied-score instances, max abs error " + fmt("%.3g", worst);
  });
}

CheckResult check_simd(std::uint64_t seed) {
  return timed("simd", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "simd"));
    const simd::Kernels& ref = simd::scalar_kernels();
    std::vector<const simd::Kernels*> variants;
    if (auto* k = simd::avx2_kernels()) variants.push_back(k);
    if (auto* k = simd::neon_kernels()) variants.push_back(k);
    constexpr double eps = std::numeric_limits<double>::epsilon();
    bool ok = true;
    std::string names;
    for (const simd::Kernels* k : variants) {
      names += std::string(names.empty() ? "" : ", ") + std::string(simd::isa_name(k->isa));
      for (std::size_t n = 0; n <= 67; ++n) {
        const auto x = normal_vector(n, 1.0, rng);
        const auto y = normal_vector(n, 1.0, rng);
        double abs_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) abs_sum += std::abs(x[i] * y[i]);
        const double dot_err = std::abs(k->dot(x.data(), y.data(), n) - ref.dot(x.data(), y.data(), n));
        ok = ok && dot_err <= 2.0 * static_cast<double>(n + 1) * eps * abs_sum;

        const double a = standard_normal(rng);
        auto y1 = y, y2 = y;
        k->axpy(a, x.data(), y1.data(), n);
        ref.axpy(a, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
          ok = ok && std::abs(y1[i] - y2[i]) <= 2.0 * eps * (std::abs(a * x[i]) + std::abs(y[i]));
        }
        auto s1 = x, s2 = x;
        k->scale(a, s1.data(), n);
        ref.scale(a, s2.data(), n);
        ok = ok && s1 == s2;
      }
    }
    r.passed = ok;
    r.detail = variants.empty() ? "no vectorized kernels on this machine; scalar only"
                                : "variants [" + names + "] agree with scalar; active " +
                                      std::string(simd::isa_name(simd::active().isa));
  });
}

CheckResult check_checkpoint(std::uint64_t seed) {
  return timed("checkpoint", [&](CheckResult& r) {
    Rng rng(derive_seed(seed, "checkpoint"));
    bool ok = true;
    for (int i = 0; i < 10; ++i) {
      ModelWeights w = init_weights(
          make_spec({3, 7, 5, 2}, i % 2 ? Activation::relu : Activation::leaky_relu, i % 3 != 0),
          rng);
      for (double& p : w.params()) p = standard_normal(rng) * std::pow(10.0, uniform(rng, -12, 8));
      for (double& p : w.running()) p = std::abs(standard_normal(rng)) + 1e-300;
      const std::string text = checkpoint_to_string(w);
      const ModelWeights back = checkpoint_from_string(text);
      ok = ok && back == w && checkpoint_to_string(back) == text;
    }
    r.passed = ok;
    r.detail = std::string("10 random models round-trip bit-exactly: ") + (ok ? "yes" : "no");
  });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{
      "autodiff", "gp",     "es-covariance", "es-estimator", "plugin-equivalence",
      "value-loss-identities", "fisher-sets", "aucpr", "simd", "checkpoint"};
  return names;
}

CheckResult run_suite(std::string_view name, std::uint64_t seed) {
  if (name == "autodiff") return check_autodiff(seed);
  if (name == "gp") return check_gp(seed);
  if (name == "es-covariance") return check_es_covariance(seed);
  if (name == "es-estimator") return check_es_estimator(seed);
  if (name == "plugin-equivalence") return check_plugin_equivalence(seed);
  if (name == "value-loss-identities") return check_value_loss_identities(seed);
  if (name == "fisher-sets") return check_fisher_sets();
  if (name == "aucpr") return check_average_precision(seed);
  if (name == "simd") return check_simd(seed);
  if (name == "checkpoint") return check_checkpoint(seed);
  throw Error("unknown selfcheck suite '" + std::string(name) + "'");
}

}  // namespace metricopt::checks
