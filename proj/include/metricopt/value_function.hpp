#pragma once

// The learned value function f: phi -> metric estimate (lower is better),
// its ordinal embedding g (last hidden layer) and the training objective
//   L_v = gamma * L_regress + L_oe.

#include <cstddef>
#include <span>
#include <vector>

#include "metricopt/mlp.hpp"
#include "metricopt/optim.hpp"
#include "metricopt/rng.hpp"

namespace metricopt {

inline constexpr std::size_t kEmbeddingDim = 16;
inline constexpr double kFisherThreshold = 2.0;

// d-64-32-32-16-1, ReLU hidden layers (each with BatchNorm unless disabled),
// identity output. A positive `leaky_slope` switches the hidden layers to
// leaky ReLU.
MLPSpec value_function_spec(std::size_t d, bool batchnorm = true, double leaky_slope = 0.0);
ModelWeights init_value_function(std::size_t d, Rng& rng, bool batchnorm = true,
                                 double leaky_slope = 0.0);

// Single-input queries run in eval mode (running BatchNorm stats).
double predict(const ModelWeights& wv, std::span<const double> phi);
std::vector<double> predict_batch(const ModelWeights& wv, const Tensor& phis);
std::vector<double> embed(const ModelWeights& wv, std::span<const double> phi);
// df/dphi in eval mode.
std::vector<double> predict_grad(const ModelWeights& wv, std::span<const double> phi);

// One finetuning trajectory with interpolated labels: rows of `phi` are
// phi_1..phi_T, `mean`/`std` the GP posterior at the same steps.
struct TrainingSequence {
  Tensor phi;
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t length() const { return mean.size(); }
  void validate() const;
};

// Stacks sequences into one batch (rows and labels in order).
TrainingSequence concat_sequences(std::span<const TrainingSequence> seqs);

double fisher_ratio(double mean_a, double std_a, double mean_b, double std_b);
// P_t = {t' : r < 2}; N_t = {t' : r >= 2}.
inline bool in_positive_set(double ratio) { return ratio < kFisherThreshold; }

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Hardest positive (farthest in embedding space) and hardest negative
// (closest) for each anchor; anchors with an empty P_t or N_t are skipped.
// `embeddings` rows align with the sequence steps.
std::vector<Triplet> mine_triplets(const TrainingSequence& seq, const Tensor& embeddings,
                                   std::span<const std::size_t> anchors);
// Same, with embeddings computed by `wv` in eval mode.
std::vector<Triplet> mine_triplets(const TrainingSequence& seq, const ModelWeights& wv,
                                   std::span<const std::size_t> anchors);

struct ValueLoss {
  double total = 0.0;
  double regress = 0.0;
  double oe = 0.0;
  Gradients grads;
};

// Uncertainty-weighted absolute error
//   L_regress = sum_t |f(phi_t) - M_t| / s_t  /  sum_t 1 / s_t
// plus the mean softplus triplet loss over `triplets`
//   L_oe = mean log(1 + exp(-(D(t, t_n) - D(t, t_p)))).
// Forward runs in train mode over the whole sequence as one batch. With no
// triplets (or use_oe false) L_oe is 0.
ValueLoss loss_value_function(const ModelWeights& wv, const TrainingSequence& seq,
                              std::span<const Triplet> triplets, double gamma, bool use_oe = true);

struct ValueTrainConfig {
  double gamma = 10.0;
  bool use_oe = true;
  std::size_t anchors = 32;
  std::size_t steps = 50;
  double lr = 0.005;
};

// `steps` Adam updates of L_v on one sequence, mining fresh triplets from a
// random anchor subset each step. Running stats follow the training batches.
void train_value_function(ModelWeights& wv, const TrainingSequence& seq,
                          const ValueTrainConfig& cfg, Rng& rng, AdamState* adam = nullptr);

// Mean |f(phi_t) - M_t| over all steps of all sequences (eval mode).
double prediction_error(const ModelWeights& wv, std::span<const TrainingSequence> seqs);

}  // namespace metricopt
