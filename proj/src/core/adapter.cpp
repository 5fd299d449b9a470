#include "metricopt/adapter.hpp"

#include <cmath>
#include <string>

#include "metricopt/error.hpp"
#include "metricopt/metrics.hpp"

namespace metricopt {

std::string_view adapter_name(AdapterKind kind) {
  return kind == AdapterKind::dynamic_bias ? "dynamic_bias" : "film";
}

AdapterKind parse_adapter_kind(std::string_view name) {
  if (name == "dynamic_bias") return AdapterKind::dynamic_bias;
  if (name == "film") return AdapterKind::film;
  throw FormatError("unknown adapter kind '" + std::string(name) + "'");
}

std::size_t base_input_dim(const AdapterConfig& cfg, std::size_t p) {
  return cfg.kind == AdapterKind::dynamic_bias ? p + cfg.dim : p;
}

void check_adapter(const ModelWeights& theta, const AdapterConfig& cfg, std::size_t phi_dim,
                   std::size_t p) {
  if (phi_dim != cfg.dim) {
    throw ShapeError("adapter: phi has " + std::to_string(phi_dim) + " entries, expected " +
                     std::to_string(cfg.dim));
  }
  const MLPSpec& spec = theta.spec();
  if (spec.input_dim() != base_input_dim(cfg, p)) {
    throw ShapeError("adapter: base model input dim " + std::to_string(spec.input_dim()) +
                     " does not fit " + std::to_string(p) + " features");
  }
  if (cfg.kind == AdapterKind::film) {
    if (cfg.film_layer >= spec.num_hidden()) throw ShapeError("adapter: FiLM layer out of range");
    if (cfg.dim != 2 * theta.out_dim(cfg.film_layer)) {
      throw ShapeError("adapter: FiLM needs d = 2 x modulated width");
    }
  }
}

std::vector<double> init_phi(std::size_t d, double stddev, Rng& rng) {
  return normal_vector(d, stddev, rng);
}

namespace {

Tensor with_bias_block(const Tensor& x, std::span<const double> phi) {
  const std::size_t p = x.cols();
  Tensor out = Tensor::matrix(x.rows(), p + phi.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row_span(r);
    auto dst = out.row_span(r);
    std::copy(src.begin(), src.end(), dst.begin());
    std::copy(phi.begin(), phi.end(), dst.begin() + static_cast<std::ptrdiff_t>(p));
  }
  return out;
}

FilmModulation film_from_phi(const AdapterConfig& cfg, std::span<const double> phi) {
  const std::size_t width = phi.size() / 2;
  FilmModulation film;
  film.layer = cfg.film_layer;
  film.scale_delta.assign(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(width));
  film.shift.assign(phi.begin() + static_cast<std::ptrdiff_t>(width), phi.end());
  return film;
}

ForwardCache modulated_cache(const ModelWeights& theta, const AdapterConfig& cfg,
                             std::span<const double> phi, const Tensor& x, Mode mode) {
  check_adapter(theta, cfg, phi.size(), x.cols());
  if (cfg.kind == AdapterKind::dynamic_bias) {
    return forward_cached(theta, with_bias_block(x, phi), mode);
  }
  const FilmModulation film = film_from_phi(cfg, phi);
  return forward_cached(theta, x, mode, &film);
}

std::vector<double> phi_grad_from(const AdapterConfig& cfg, const Gradients& g, std::size_t p) {
  std::vector<double> out(cfg.dim, 0.0);
  if (cfg.kind == AdapterKind::dynamic_bias) {
    for (std::size_t r = 0; r < g.input.rows(); ++r) {
      for (std::size_t j = 0; j < cfg.dim; ++j) out[j] += g.input(r, p + j);
    }
  } else {
    const std::size_t width = cfg.dim / 2;
    for (std::size_t j = 0; j < width; ++j) {
      out[j] = g.film_scale[j];
      out[width + j] = g.film_shift[j];
    }
  }
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("adapter: non-finite phi gradient");
  }
  return out;
}

}  // namespace

Tensor modulated_forward(const ModelWeights& theta, const AdapterConfig& cfg,
                         std::span<const double> phi, const Tensor& x, Mode mode) {
  ForwardCache cache = modulated_cache(theta, cfg, phi, x, mode);
  return std::move(cache.layers.back().output);
}

std::vector<double> grad_wrt_phi(const ModelWeights& theta, const AdapterConfig& cfg,
                                 std::span<const double> phi, const Tensor& x,
                                 const Tensor& upstream, Mode mode) {
  const ForwardCache cache = modulated_cache(theta, cfg, phi, x, mode);
  const Gradients g = backward(theta, cache, upstream);
  return phi_grad_from(cfg, g, x.cols());
}

LossAndGrad cross_entropy_phi_grad(const ModelWeights& theta, const AdapterConfig& cfg,
                                   std::span<const double> phi, const Tensor& x,
                                   std::span<const int> labels, Mode mode) {
  if (theta.spec().output_dim() != 1) throw ShapeError("cross-entropy needs a scalar output");
  const ForwardCache cache = modulated_cache(theta, cfg, phi, x, mode);
  const Tensor& logits = cache.output();
  Tensor upstream = Tensor::matrix(logits.rows(), 1);
  const double loss = cross_entropy_with_grad(logits.data(), labels, upstream.data());
  const Gradients g = backward(theta, cache, upstream);
  return {loss, phi_grad_from(cfg, g, x.cols())};
}

std::vector<double> predict_proba(const ModelWeights& theta, const AdapterConfig& cfg,
                                  std::span<const double> phi, const Tensor& x) {
  const Tensor logits = modulated_forward(theta, cfg, phi, x, Mode::eval);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double z = logits.data()[i];
    p[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return p;
}

}  // namespace metricopt
