#include <doctest.h>

#include "metricopt/adapter.hpp"
#include "metricopt/error.hpp"
#include "oracles.hpp"

using namespace metricopt;

namespace {

ModelWeights base_model(std::size_t in, Rng& rng, bool bn = true) {
  ModelWeights w = init_weights(make_spec({in, 6, 5, 1}, Activation::leaky_relu, bn), rng);
  for (std::size_t l = 0; l < 2; ++l) {
    if (!w.has_batchnorm(l)) continue;
    for (double& m : w.running_mean(l)) m = 0.2 * standard_normal(rng);
    for (double& v : w.running_var(l)) v = 1.5;
  }
  return w;
}

AdapterConfig film_config() {
  AdapterConfig cfg;
  cfg.kind = AdapterKind::film;
  cfg.film_layer = 1;
  cfg.dim = 10;  // 2 x 5 modulated features
  return cfg;
}

}  // namespace

TEST_CASE("FiLM with phi = 0 is the unmodulated network") {
  Rng rng(1);
  const ModelWeights theta = base_model(3, rng);
  const Tensor x = Tensor::matrix(4, 3, normal_vector(12, 1.0, rng));
  const std::vector<double> phi(10, 0.0);
  CHECK(modulated_forward(theta, film_config(), phi, x) == forward(theta, x, Mode::eval));
}

TEST_CASE("dynamic bias with phi = 0 equals a zero-padded input") {
  Rng rng(2);
  AdapterConfig cfg;
  cfg.dim = 4;
  CHECK(base_input_dim(cfg, 3) == 7);
  const ModelWeights theta = base_model(7, rng);
  const Tensor x = Tensor::matrix(2, 3, normal_vector(6, 1.0, rng));
  Tensor padded = Tensor::matrix(2, 7);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) padded(r, j) = x(r, j);
  }
  const std::vector<double> phi(4, 0.0);
  CHECK(modulated_forward(theta, cfg, phi, x) == forward(theta, padded, Mode::eval));
}

TEST_CASE("FiLM with rho = -1 outputs the shift on the modulated layer") {
  Rng rng(3);
  // One hidden layer, modulated, identity read-out of its 2 units.
  ModelWeights theta = init_weights(make_spec({2, 2, 2}, Activation::relu, false), rng);
  for (double& v : theta.weight(1)) v = 0.0;
  theta.weight(1)[0] = 1.0;
  theta.weight(1)[3] = 1.0;
  AdapterConfig cfg;
  cfg.kind = AdapterKind::film;
  cfg.dim = 4;
  const std::vector<double> phi{-1.0, -1.0, 0.3, -0.8};
  const Tensor out = modulated_forward(theta, cfg, phi, Tensor::matrix(3, 2, normal_vector(6, 1.0, rng)));
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(out(r, 0) == 0.3);
    CHECK(out(r, 1) == -0.8);
  }
}

TEST_CASE("phi gradients match finite differences") {
  Rng rng(4);
  for (AdapterKind kind : {AdapterKind::dynamic_bias, AdapterKind::film}) {
    AdapterConfig cfg = kind == AdapterKind::film ? film_config() : AdapterConfig{};
    if (kind == AdapterKind::dynamic_bias) cfg.dim = 5;
    const ModelWeights theta = base_model(base_input_dim(cfg, 3), rng);
    const Tensor x = Tensor::matrix(5, 3, normal_vector(15, 1.0, rng));
    const Tensor up = Tensor::matrix(5, 1, normal_vector(5, 1.0, rng));
    const auto phi = normal_vector(cfg.dim, 0.3, rng);
    const auto g = grad_wrt_phi(theta, cfg, phi, x, up);
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& p) {
          const Tensor out = modulated_forward(theta, cfg, p, x);
          double s = 0.0;
          for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * up.data()[i];
          return s;
        },
        phi);
    CHECK(oracle::max_rel_error(g, fd, 1e-6) < 1e-4);
  }
}

TEST_CASE("FiLM shift gradient is the summed upstream of the modulated layer") {
  Rng rng(5);
  ModelWeights theta = init_weights(make_spec({3, 4, 1}, Activation::relu, false), rng);
  AdapterConfig cfg;
  cfg.kind = AdapterKind::film;
  cfg.dim = 8;
  const Tensor x = Tensor::matrix(3, 3, normal_vector(9, 1.0, rng));
  const Tensor up = Tensor::matrix(3, 1, std::vector<double>{1.0, -2.0, 0.5});
  const std::vector<double> phi(8, 0.0);
  const auto g = grad_wrt_phi(theta, cfg, phi, x, up);
  // out = w2 . h' + b, h' = (1 + rho) h + s  =>  d/ds_j = w2_j * sum_r up_r
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(g[4 + j] == doctest::Approx(theta.weight(1)[j] * (1.0 - 2.0 + 0.5)));
  }
}

TEST_CASE("zero upstream gives a zero phi gradient") {
  Rng rng(6);
  AdapterConfig cfg;
  cfg.dim = 3;
  const ModelWeights theta = base_model(5, rng);
  const auto g = grad_wrt_phi(theta, cfg, normal_vector(3, 1.0, rng),
                              Tensor::matrix(4, 2, 1.0), Tensor::matrix(4, 1, 0.0));
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("theta is never modified") {
  Rng rng(7);
  AdapterConfig cfg;
  cfg.dim = 3;
  const ModelWeights theta = base_model(5, rng);
  const ModelWeights copy = theta;
  const Tensor x = Tensor::matrix(4, 2, normal_vector(8, 1.0, rng));
  const std::vector<int> y{1, 0, 1, 1};
  cross_entropy_phi_grad(theta, cfg, normal_vector(3, 1.0, rng), x, y);
  predict_proba(theta, cfg, normal_vector(3, 1.0, rng), x);
  CHECK(theta == copy);
}

TEST_CASE("adapter dimension mismatches are rejected") {
  Rng rng(8);
  const ModelWeights theta = base_model(5, rng);
  AdapterConfig cfg;
  cfg.dim = 3;
  CHECK_THROWS_AS(modulated_forward(theta, cfg, std::vector<double>(4), Tensor::matrix(1, 2)),
                  ShapeError);
  CHECK_THROWS_AS(check_adapter(theta, cfg, 3, 4), ShapeError);
  AdapterConfig film = film_config();
  film.dim = 9;
  CHECK_THROWS_AS(check_adapter(base_model(3, rng), film, 9, 3), ShapeError);
  CHECK(parse_adapter_kind(adapter_name(AdapterKind::film)) == AdapterKind::film);
}
