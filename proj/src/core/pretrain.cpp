#include "metricopt/pretrain.hpp"

#include <cmath>

#include "metricopt/error.hpp"
#include "metricopt/metrics.hpp"
#include "metricopt/optim.hpp"

namespace metricopt {

MLPSpec base_model_spec(std::size_t p, const BaseModelConfig& base, const AdapterConfig& adapter) {
  std::vector<std::size_t> sizes;
  sizes.push_back(base_input_dim(adapter, p));
  sizes.insert(sizes.end(), base.hidden.begin(), base.hidden.end());
  sizes.push_back(1);
  return make_spec(std::move(sizes), Activation::leaky_relu, base.batchnorm,
                   OutputActivation::identity, base.leaky_slope);
}

ModelWeights pretrain_base_model(const MLPSpec& spec, const AdapterConfig& adapter,
                                 const LabeledDataset& data, const PretrainConfig& cfg,
                                 std::uint64_t seed) {
  Rng init_rng(derive_seed(seed, "pretrain/init"));
  ModelWeights theta = init_weights(spec, init_rng);
  if (cfg.steps == 0) return theta;

  const std::vector<double> phi(adapter.dim, 0.0);
  check_adapter(theta, adapter, phi.size(), data.num_features());
  const BalancedSampler sampler(data, Split::train);
  Rng batch_rng(derive_seed(seed, "pretrain/batches"));
  AdamState adam(theta.params().size());

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rows = sampler.sample(cfg.batch_size, batch_rng);
    const Batch batch = gather(data, rows);
    ForwardCache cache;
    if (adapter.kind == AdapterKind::dynamic_bias) {
      Tensor x = Tensor::matrix(batch.x.rows(), spec.input_dim());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = batch.x.row_span(r);
        std::copy(src.begin(), src.end(), x.row_span(r).begin());
      }
      cache = forward_cached(theta, x, Mode::train);
    } else {
      FilmModulation film;
      film.layer = adapter.film_layer;
      film.scale_delta.assign(adapter.dim / 2, 0.0);
      film.shift.assign(adapter.dim / 2, 0.0);
      cache = forward_cached(theta, batch.x, Mode::train, &film);
    }
    Tensor upstream = Tensor::matrix(batch.y.size(), 1);
    const double loss = cross_entropy_with_grad(cache.output().data(), batch.y, upstream.data());
    if (!std::isfinite(loss)) throw NumericError("pretraining diverged");
    const Gradients g = backward(theta, cache, upstream);
    adam_step(adam, theta, g, cfg.lr);
    update_running_stats(theta, cache);
  }
  return theta;
}

}  // namespace metricopt
