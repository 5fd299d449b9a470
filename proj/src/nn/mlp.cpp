#include "metricopt/mlp.hpp"

#include <cmath>
#include <string>

#include "metricopt/error.hpp"
#include "metricopt/simd.hpp"

namespace metricopt {

void MLPSpec::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("MLP needs at least an input and an output layer");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ShapeError("MLP layer sizes must be positive");
  }
  if (batchnorm.size() != num_hidden()) {
    throw ShapeError("MLP batchnorm flags: expected " + std::to_string(num_hidden()) + ", got " +
                     std::to_string(batchnorm.size()));
  }
  if (activation == Activation::leaky_relu && !(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ShapeError("leaky ReLU slope must lie in (0, 1)");
  }
}

MLPSpec make_spec(std::vector<std::size_t> sizes, Activation act, bool batchnorm,
                  OutputActivation out, double leaky_slope) {
  MLPSpec spec;
  spec.layer_sizes = std::move(sizes);
  spec.activation = act;
  spec.leaky_slope = leaky_slope;
  spec.batchnorm.assign(spec.num_hidden(), batchnorm);
  spec.output_activation = out;
  spec.validate();
  return spec;
}

ModelWeights::ModelWeights(MLPSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  std::size_t roffset = 0;
  layout_.resize(spec_.num_layers());
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    Offsets& o = layout_[l];
    const std::size_t in = spec_.layer_sizes[l];
    const std::size_t out = spec_.layer_sizes[l + 1];
    o.weight = offset;
    offset += in * out;
    o.bias = offset;
    offset += out;
    o.has_bn = l < spec_.num_hidden() && spec_.batchnorm[l];
    if (o.has_bn) {
      o.gamma = offset;
      offset += out;
      o.beta = offset;
      offset += out;
      o.mean = roffset;
      roffset += out;
      o.var = roffset;
      roffset += out;
    }
  }
  params_.assign(offset, 0.0);
  running_.assign(roffset, 0.0);
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    if (!layout_[l].has_bn) continue;
    for (double& g : gamma(l)) g = 1.0;
    for (double& v : running_var(l)) v = 1.0;
  }
}

ModelWeights init_weights(const MLPSpec& spec, Rng& rng) {
  ModelWeights w(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.in_dim(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.weight(l)) v = dist(rng);
  }
  return w;
}

namespace {

double activate(double y, const MLPSpec& spec) {
  if (y > 0.0) return y;
  return spec.activation == Activation::relu ? 0.0 : spec.leaky_slope * y;
}

double activate_grad(double y, const MLPSpec& spec) {
  if (y > 0.0) return 1.0;
  return spec.activation == Activation::relu ? 0.0 : spec.leaky_slope;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_film(const ModelWeights& w, const FilmModulation& film) {
  const MLPSpec& spec = w.spec();
  if (film.layer >= spec.num_hidden()) {
    throw ShapeError("FiLM layer " + std::to_string(film.layer) + " is not a hidden layer");
  }
  const std::size_t width = w.out_dim(film.layer);
  if (film.scale_delta.size() != width || film.shift.size() != width) {
    throw ShapeError("FiLM parameters must match hidden width " + std::to_string(width));
  }
}

// z = a W^T + b
Tensor affine(const Tensor& a, std::span<const double> weight, std::span<const double> bias,
              std::size_t out) {
  const std::size_t batch = a.rows();
  const std::size_t in = a.cols();
  Tensor z = Tensor::matrix(batch, out);
  const auto& k = simd::active();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* ar = a.data().data() + r * in;
    double* zr = z.data().data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      zr[o] = k.dot(ar, weight.data() + o * in, in) + bias[o];
    }
  }
  return z;
}

}  // namespace

ForwardCache forward_cached(const ModelWeights& weights, const Tensor& input, Mode mode,
                            const FilmModulation* film) {
  const MLPSpec& spec = weights.spec();
  if (input.rank() != 2 || input.cols() != spec.input_dim()) {
    throw ShapeError("forward: input shape " + shape_string(input.shape()) +
                     " does not match input dim " + std::to_string(spec.input_dim()));
  }
  if (input.rows() == 0) throw ShapeError("forward: empty batch");
  if (film) check_film(weights, *film);

  const std::size_t batch = input.rows();
  ForwardCache cache;
  cache.mode = mode;
  if (film) cache.film = *film;
  cache.layers.resize(spec.num_layers());

  const Tensor* current = &input;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    LayerCache& lc = cache.layers[l];
    const std::size_t out = weights.out_dim(l);
    lc.input = *current;
    lc.pre = affine(lc.input, weights.weight(l), weights.bias(l), out);

    const bool hidden = l < spec.num_hidden();
    if (!hidden) {
      lc.activated = lc.pre;
      if (spec.output_activation == OutputActivation::sigmoid) {
        for (double& v : lc.activated.data()) v = sigmoid(v);
      }
      lc.output = lc.activated;
      break;
    }

    Tensor y = lc.pre;
    if (weights.has_batchnorm(l)) {
      lc.normalized = Tensor::matrix(batch, out);
      lc.inv_std.assign(out, 0.0);
      auto gamma = weights.gamma(l);
      auto beta = weights.beta(l);
      if (mode == Mode::train) {
        lc.batch_mean.assign(out, 0.0);
        lc.batch_var.assign(out, 0.0);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < out; ++j) lc.batch_mean[j] += lc.pre(r, j);
        }
        for (double& m : lc.batch_mean) m /= static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < out; ++j) {
            const double c = lc.pre(r, j) - lc.batch_mean[j];
            lc.batch_var[j] += c * c;
          }
        }
        for (std::size_t j = 0; j < out; ++j) {
          lc.batch_var[j] /= static_cast<double>(batch);
          lc.inv_std[j] = 1.0 / std::sqrt(lc.batch_var[j] + kBatchNormEps);
        }
      } else {
        auto rvar = weights.running_var(l);
        for (std::size_t j = 0; j < out; ++j) {
          if (!(rvar[j] >= 0.0)) throw NumericError("BatchNorm running variance is negative");
          lc.inv_std[j] = 1.0 / std::sqrt(rvar[j] + kBatchNormEps);
        }
      }
      const std::span<const double> mean =
          mode == Mode::train ? std::span<const double>(lc.batch_mean) : weights.running_mean(l);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < out; ++j) {
          const double xhat = (lc.pre(r, j) - mean[j]) * lc.inv_std[j];
          lc.normalized(r, j) = xhat;
          y(r, j) = gamma[j] * xhat + beta[j];
        }
      }
    }

    lc.activated = std::move(y);
    for (double& v : lc.activated.data()) v = activate(v, spec);
    lc.output = lc.activated;
    if (film && film->layer == l) {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < out; ++j) {
          lc.output(r, j) = (1.0 + film->scale_delta[j]) * lc.activated(r, j) + film->shift[j];
        }
      }
    }
    current = &lc.output;
  }

  cache.output().require_finite("forward output");
  return cache;
}

Tensor forward(const ModelWeights& weights, const Tensor& input, Mode mode,
               const FilmModulation* film) {
  ForwardCache cache = forward_cached(weights, input, mode, film);
  return std::move(cache.layers.back().output);
}

Gradients backward(const ModelWeights& weights, const ForwardCache& cache,
                   const Tensor& upstream, std::span<const HiddenUpstream> hidden) {
  const MLPSpec& spec = weights.spec();
  const Tensor& out = cache.output();
  if (upstream.shape() != out.shape()) {
    throw ShapeError("backward: upstream shape " + shape_string(upstream.shape()) +
                     " does not match output " + shape_string(out.shape()));
  }
  for (const HiddenUpstream& h : hidden) {
    if (h.layer >= spec.num_hidden() || !h.grad ||
        h.grad->shape() != cache.layers[h.layer].output.shape()) {
      throw ShapeError("backward: bad hidden upstream gradient");
    }
  }

  const auto& k = simd::active();
  const std::size_t batch = out.rows();
  Gradients grads;
  grads.params.assign(weights.params().size(), 0.0);

  const std::size_t last = spec.num_layers() - 1;
  Tensor d_out = upstream;  // gradient w.r.t. the current layer's output
  for (std::size_t li = spec.num_layers(); li-- > 0;) {
    const LayerCache& lc = cache.layers[li];
    const std::size_t n_out = weights.out_dim(li);
    const std::size_t n_in = weights.in_dim(li);

    for (const HiddenUpstream& h : hidden) {
      if (h.layer == li) k.axpy(1.0, h.grad->data().data(), d_out.data().data(), d_out.size());
    }

    Tensor dz = Tensor::matrix(batch, n_out);
    if (li == last) {
      if (spec.output_activation == OutputActivation::sigmoid) {
        for (std::size_t i = 0; i < dz.size(); ++i) {
          const double s = lc.activated.data()[i];
          dz.data()[i] = d_out.data()[i] * s * (1.0 - s);
        }
      } else {
        dz = d_out;
      }
    } else {
      // undo FiLM
      Tensor dh = d_out;
      if (cache.film && cache.film->layer == li) {
        const FilmModulation& film = *cache.film;
        grads.film_scale.assign(n_out, 0.0);
        grads.film_shift.assign(n_out, 0.0);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < n_out; ++j) {
            grads.film_scale[j] += d_out(r, j) * lc.activated(r, j);
            grads.film_shift[j] += d_out(r, j);
            dh(r, j) = d_out(r, j) * (1.0 + film.scale_delta[j]);
          }
        }
      }
      // activation; recover its argument y from z (and BatchNorm)
      Tensor dy = Tensor::matrix(batch, n_out);
      const bool bn = weights.has_batchnorm(li);
      auto gamma = bn ? weights.gamma(li) : std::span<const double>{};
      auto beta = bn ? weights.beta(li) : std::span<const double>{};
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < n_out; ++j) {
          const double y = bn ? gamma[j] * lc.normalized(r, j) + beta[j] : lc.pre(r, j);
          dy(r, j) = dh(r, j) * activate_grad(y, spec);
        }
      }
      if (!bn) {
        dz = std::move(dy);
      } else {
        double* dgamma = grads.params.data() + weights.gamma_offset(li);
        double* dbeta = grads.params.data() + weights.beta_offset(li);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < n_out; ++j) {
            dgamma[j] += dy(r, j) * lc.normalized(r, j);
            dbeta[j] += dy(r, j);
          }
        }
        if (cache.mode == Mode::eval) {
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t j = 0; j < n_out; ++j) dz(r, j) = dy(r, j) * gamma[j] * lc.inv_std[j];
          }
        } else {
          // dz = inv_std/N * (N dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
          const double n = static_cast<double>(batch);
          std::vector<double> sum_dxhat(n_out, 0.0), sum_dxhat_xhat(n_out, 0.0);
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t j = 0; j < n_out; ++j) {
              const double dxhat = dy(r, j) * gamma[j];
              sum_dxhat[j] += dxhat;
              sum_dxhat_xhat[j] += dxhat * lc.normalized(r, j);
            }
          }
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t j = 0; j < n_out; ++j) {
              const double dxhat = dy(r, j) * gamma[j];
              dz(r, j) = lc.inv_std[j] / n *
                         (n * dxhat - sum_dxhat[j] - lc.normalized(r, j) * sum_dxhat_xhat[j]);
            }
          }
        }
      }
    }

    // affine: dW += dz^T a, db += sum dz, da = dz W
    double* dw = grads.params.data() + weights.weight_offset(li);
    double* db = grads.params.data() + weights.bias_offset(li);
    auto w = weights.weight(li);
    Tensor d_in = Tensor::matrix(batch, n_in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* ar = lc.input.data().data() + r * n_in;
      double* dar = d_in.data().data() + r * n_in;
      for (std::size_t o = 0; o < n_out; ++o) {
        const double g = dz(r, o);
        if (g == 0.0) continue;
        db[o] += g;
        k.axpy(g, ar, dw + o * n_in, n_in);
        k.axpy(g, w.data() + o * n_in, dar, n_in);
      }
    }
    d_out = std::move(d_in);
  }

  grads.input = std::move(d_out);
  for (double g : grads.params) {
    if (!std::isfinite(g)) throw NumericError("backward produced a non-finite weight gradient");
  }
  grads.input.require_finite("input gradient");
  return grads;
}

void update_running_stats(ModelWeights& weights, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  for (std::size_t l = 0; l < weights.spec().num_hidden(); ++l) {
    if (!weights.has_batchnorm(l)) continue;
    const LayerCache& lc = cache.layers[l];
    auto mean = weights.running_mean(l);
    auto var = weights.running_var(l);
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] = momentum * mean[j] + (1.0 - momentum) * lc.batch_mean[j];
      var[j] = momentum * var[j] + (1.0 - momentum) * lc.batch_var[j];
    }
  }
}

}  // namespace metricopt
