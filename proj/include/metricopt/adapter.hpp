#pragma once

// Adapter parameters phi that modulate a frozen base model theta. Every
// function here takes theta by const reference; only phi is ever trained.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "metricopt/mlp.hpp"
#include "metricopt/rng.hpp"

namespace metricopt {

enum class AdapterKind {
  dynamic_bias,  // phi concatenated to every input row before the first layer
  film,          // (1 + rho) * h + b on one hidden layer, phi = [rho; b]
};

std::string_view adapter_name(AdapterKind kind);
AdapterKind parse_adapter_kind(std::string_view name);

struct AdapterConfig {
  AdapterKind kind = AdapterKind::dynamic_bias;
  std::size_t dim = 16;
  std::size_t film_layer = 0;  // hidden layer index, film only
};

// Input width theta expects for raw feature width p.
std::size_t base_input_dim(const AdapterConfig& cfg, std::size_t p);

// Throws ShapeError unless theta, cfg, phi and feature width agree.
void check_adapter(const ModelWeights& theta, const AdapterConfig& cfg, std::size_t phi_dim,
                   std::size_t p);

// phi ~ N(0, stddev^2)
std::vector<double> init_phi(std::size_t d, double stddev, Rng& rng);

Tensor modulated_forward(const ModelWeights& theta, const AdapterConfig& cfg,
                         std::span<const double> phi, const Tensor& x, Mode mode = Mode::eval);

// d(sum(upstream * output)) / d(phi). Theta gradients are dropped.
std::vector<double> grad_wrt_phi(const ModelWeights& theta, const AdapterConfig& cfg,
                                 std::span<const double> phi, const Tensor& x,
                                 const Tensor& upstream, Mode mode = Mode::eval);

struct LossAndGrad {
  double loss;
  std::vector<double> grad;
};

// Mean cross-entropy of the modulated model's logits and its phi-gradient.
LossAndGrad cross_entropy_phi_grad(const ModelWeights& theta, const AdapterConfig& cfg,
                                   std::span<const double> phi, const Tensor& x,
                                   std::span<const int> labels, Mode mode = Mode::eval);

// Sigmoid probabilities of the modulated model, one per row.
std::vector<double> predict_proba(const ModelWeights& theta, const AdapterConfig& cfg,
                                  std::span<const double> phi, const Tensor& x);

}  // namespace metricopt
