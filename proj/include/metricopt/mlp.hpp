#pragma once

// Dense MLPs with a taped forward pass and a reverse sweep that returns
// gradients for weights, inputs and an optional FiLM modulation.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "metricopt/rng.hpp"
#include "metricopt/tensor.hpp"

namespace metricopt {

enum class Activation { relu, leaky_relu };
enum class OutputActivation { identity, sigmoid };
enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct MLPSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::relu;
  double leaky_slope = 0.01;
  std::vector<bool> batchnorm;  // one flag per hidden layer
  OutputActivation output_activation = OutputActivation::identity;

  std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t num_hidden() const { return num_layers() == 0 ? 0 : num_layers() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  void validate() const;

  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

// Builds a spec with BatchNorm on every hidden layer when `batchnorm` is set.
MLPSpec make_spec(std::vector<std::size_t> sizes, Activation act, bool batchnorm,
                  OutputActivation out = OutputActivation::identity, double leaky_slope = 0.01);

// All trainable parameters live in one flat buffer; running BatchNorm stats in
// another. Per layer the trainable layout is W (out x in, row-major), b, then
// gamma and beta when the layer has BatchNorm.
class ModelWeights {
 public:
  ModelWeights() = default;
  // Zero weights and biases, gamma = 1, beta = 0, running mean 0, var 1.
  explicit ModelWeights(MLPSpec spec);

  const MLPSpec& spec() const { return spec_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> running() { return running_; }
  std::span<const double> running() const { return running_; }

  std::size_t in_dim(std::size_t layer) const { return spec_.layer_sizes[layer]; }
  std::size_t out_dim(std::size_t layer) const { return spec_.layer_sizes[layer + 1]; }
  bool has_batchnorm(std::size_t layer) const { return layout_[layer].has_bn; }

  std::span<double> weight(std::size_t l) { return slice(layout_[l].weight, out_dim(l) * in_dim(l)); }
  std::span<const double> weight(std::size_t l) const {
    return slice(layout_[l].weight, out_dim(l) * in_dim(l));
  }
  std::span<double> bias(std::size_t l) { return slice(layout_[l].bias, out_dim(l)); }
  std::span<const double> bias(std::size_t l) const { return slice(layout_[l].bias, out_dim(l)); }
  std::span<double> gamma(std::size_t l) { return slice(layout_[l].gamma, out_dim(l)); }
  std::span<const double> gamma(std::size_t l) const { return slice(layout_[l].gamma, out_dim(l)); }
  std::span<double> beta(std::size_t l) { return slice(layout_[l].beta, out_dim(l)); }
  std::span<const double> beta(std::size_t l) const { return slice(layout_[l].beta, out_dim(l)); }
  std::span<double> running_mean(std::size_t l) {
    return {running_.data() + layout_[l].mean, out_dim(l)};
  }
  std::span<const double> running_mean(std::size_t l) const {
    return {running_.data() + layout_[l].mean, out_dim(l)};
  }
  std::span<double> running_var(std::size_t l) {
    return {running_.data() + layout_[l].var, out_dim(l)};
  }
  std::span<const double> running_var(std::size_t l) const {
    return {running_.data() + layout_[l].var, out_dim(l)};
  }

  // Offset of layer l's weight block inside params(); used to slice gradients.
  std::size_t weight_offset(std::size_t l) const { return layout_[l].weight; }
  std::size_t bias_offset(std::size_t l) const { return layout_[l].bias; }
  std::size_t gamma_offset(std::size_t l) const { return layout_[l].gamma; }
  std::size_t beta_offset(std::size_t l) const { return layout_[l].beta; }

  friend bool operator==(const ModelWeights& a, const ModelWeights& b) {
    return a.spec_ == b.spec_ && a.params_ == b.params_ && a.running_ == b.running_;
  }

 private:
  struct Offsets {
    std::size_t weight = 0, bias = 0, gamma = 0, beta = 0, mean = 0, var = 0;
    bool has_bn = false;
  };

  std::span<double> slice(std::size_t off, std::size_t n) { return {params_.data() + off, n}; }
  std::span<const double> slice(std::size_t off, std::size_t n) const {
    return {params_.data() + off, n};
  }

  MLPSpec spec_;
  std::vector<double> params_;
  std::vector<double> running_;
  std::vector<Offsets> layout_;
};

// Uniform He-style fan-in init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
// biases 0, gamma 1, beta 0.
ModelWeights init_weights(const MLPSpec& spec, Rng& rng);

// Feature-wise modulation of one hidden layer's activations:
// h -> (1 + scale_delta) * h + shift.
struct FilmModulation {
  std::size_t layer = 0;
  std::vector<double> scale_delta;
  std::vector<double> shift;
};

struct LayerCache {
  Tensor input;       // a_{l}
  Tensor pre;         // affine output z
  Tensor normalized;  // BatchNorm x-hat (empty without BatchNorm)
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;
  Tensor activated;  // after BatchNorm + activation, before modulation
  Tensor output;     // what the next layer consumes
};

struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
  std::optional<FilmModulation> film;

  const Tensor& output() const { return layers.back().output; }
  // Post-activation output of hidden layer `h`.
  const Tensor& hidden(std::size_t h) const { return layers[h].output; }
};

struct Gradients {
  std::vector<double> params;  // same layout as ModelWeights::params()
  Tensor input;
  std::vector<double> film_scale;
  std::vector<double> film_shift;
};

// Extra upstream gradient injected at a hidden layer's output (for losses on
// intermediate embeddings).
struct HiddenUpstream {
  std::size_t layer;
  const Tensor* grad;
};

ForwardCache forward_cached(const ModelWeights& weights, const Tensor& input, Mode mode,
                            const FilmModulation* film = nullptr);

Tensor forward(const ModelWeights& weights, const Tensor& input, Mode mode,
               const FilmModulation* film = nullptr);

Gradients backward(const ModelWeights& weights, const ForwardCache& cache,
                   const Tensor& upstream, std::span<const HiddenUpstream> hidden = {});

// running = momentum * running + (1 - momentum) * batch statistic.
void update_running_stats(ModelWeights& weights, const ForwardCache& cache,
                          double momentum = kBatchNormMomentum);

}  // namespace metricopt
