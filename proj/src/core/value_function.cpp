#include "metricopt/value_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "metricopt/error.hpp"

namespace metricopt {

MLPSpec value_function_spec(std::size_t d, bool batchnorm, double leaky_slope) {
  if (leaky_slope > 0.0) {
    return make_spec({d, 64, 32, 32, kEmbeddingDim, 1}, Activation::leaky_relu, batchnorm,
                     OutputActivation::identity, leaky_slope);
  }
  return make_spec({d, 64, 32, 32, kEmbeddingDim, 1}, Activation::relu, batchnorm);
}

ModelWeights init_value_function(std::size_t d, Rng& rng, bool batchnorm, double leaky_slope) {
  return init_weights(value_function_spec(d, batchnorm, leaky_slope), rng);
}

double predict(const ModelWeights& wv, std::span<const double> phi) {
  return forward(wv, Tensor::row(phi), Mode::eval).data()[0];
}

std::vector<double> predict_batch(const ModelWeights& wv, const Tensor& phis) {
  return forward(wv, phis, Mode::eval).values();
}

std::vector<double> embed(const ModelWeights& wv, std::span<const double> phi) {
  const ForwardCache cache = forward_cached(wv, Tensor::row(phi), Mode::eval);
  return cache.hidden(wv.spec().num_hidden() - 1).values();
}

std::vector<double> predict_grad(const ModelWeights& wv, std::span<const double> phi) {
  const ForwardCache cache = forward_cached(wv, Tensor::row(phi), Mode::eval);
  const Gradients g = backward(wv, cache, Tensor::matrix(1, 1, 1.0));
  return g.input.values();
}

void TrainingSequence::validate() const {
  if (phi.rank() != 2 || phi.rows() != mean.size() || std.size() != mean.size()) {
    throw ShapeError("training sequence: phi, mean and std lengths differ");
  }
  for (double s : std) {
    if (!(s > 0.0)) throw Error("training sequence: std must be positive");
  }
}

TrainingSequence concat_sequences(std::span<const TrainingSequence> seqs) {
  if (seqs.empty()) throw Error("concat_sequences: nothing to stack");
  const std::size_t d = seqs.front().phi.cols();
  std::size_t rows = 0;
  for (const auto& s : seqs) {
    s.validate();
    if (s.phi.cols() != d) throw ShapeError("concat_sequences: phi widths differ");
    rows += s.length();
  }
  TrainingSequence out;
  out.phi = Tensor::matrix(rows, d);
  std::size_t r = 0;
  for (const auto& s : seqs) {
    std::copy(s.phi.data().begin(), s.phi.data().end(), out.phi.data().begin() + r * d);
    out.mean.insert(out.mean.end(), s.mean.begin(), s.mean.end());
    out.std.insert(out.std.end(), s.std.begin(), s.std.end());
    r += s.length();
  }
  return out;
}

double fisher_ratio(double mean_a, double std_a, double mean_b, double std_b) {
  const double diff = mean_a - mean_b;
  return diff * diff / (std_a * std_a + std_b * std_b);
}

namespace {

double distance(const Tensor& emb, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 0; j < emb.cols(); ++j) {
    const double d = emb(a, j) - emb(b, j);
    s += d * d;
  }
  return std::sqrt(s);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t embedding_layer(const ModelWeights& wv) { return wv.spec().num_hidden() - 1; }

ValueLoss loss_from_cache(const ModelWeights& wv, const ForwardCache& cache,
                          const TrainingSequence& seq, std::span<const Triplet> triplets,
                          double gamma, bool use_oe) {
  const std::size_t T = seq.length();
  const Tensor& out = cache.output();
  const Tensor& emb = cache.hidden(embedding_layer(wv));

  ValueLoss loss;
  // Weights relative to the smallest std: equal stds give ratio 1 exactly, so
  // the loss reduces to the plain mean absolute error without rounding drift.
  const double ref = *std::min_element(seq.std.begin(), seq.std.end());
  std::vector<double> ratio(T);
  double ratio_sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    ratio[t] = ref / seq.std[t];
    ratio_sum += ratio[t];
  }
  Tensor d_out = Tensor::matrix(T, 1);
  double weighted = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double resid = out(t, 0) - seq.mean[t];
    weighted += std::abs(resid) * ratio[t];
    const double sign = resid > 0.0 ? 1.0 : (resid < 0.0 ? -1.0 : 0.0);
    d_out(t, 0) = gamma * sign * ratio[t] / ratio_sum;
  }
  loss.regress = weighted / ratio_sum;

  Tensor d_emb = Tensor::matrix(T, emb.cols());
  const bool have_oe = use_oe && !triplets.empty();
  if (have_oe) {
    const double scale = 1.0 / static_cast<double>(triplets.size());
    auto accumulate = [&](std::size_t a, std::size_t b, double coeff, double dist) {
      if (dist <= 0.0) return;
      for (std::size_t j = 0; j < emb.cols(); ++j) {
        const double g = coeff * (emb(a, j) - emb(b, j)) / dist;
        d_emb(a, j) += g;
        d_emb(b, j) -= g;
      }
    };
    for (const Triplet& tr : triplets) {
      const double dp = distance(emb, tr.anchor, tr.positive);
      const double dn = distance(emb, tr.anchor, tr.negative);
      const double margin = dn - dp;
      loss.oe += softplus(-margin) * scale;
      // d softplus(-m) / dm = -sigmoid(-m)
      const double dm = -sigmoid(-margin) * scale;
      accumulate(tr.anchor, tr.negative, dm, dn);
      accumulate(tr.anchor, tr.positive, -dm, dp);
    }
  }
  loss.total = gamma * loss.regress + loss.oe;
  if (!std::isfinite(loss.total)) throw NumericError("value function loss is not finite");

  const HiddenUpstream hidden{embedding_layer(wv), &d_emb};
  loss.grads = backward(wv, cache, d_out,
                        have_oe ? std::span<const HiddenUpstream>(&hidden, 1)
                                : std::span<const HiddenUpstream>{});
  return loss;
}

}  // namespace

std::vector<Triplet> mine_triplets(const TrainingSequence& seq, const Tensor& embeddings,
                                   std::span<const std::size_t> anchors) {
  seq.validate();
  const std::size_t T = seq.length();
  if (embeddings.rows() != T) throw ShapeError("mine_triplets: embedding rows != sequence length");
  std::vector<Triplet> out;
  for (std::size_t t : anchors) {
    if (t >= T) throw ShapeError("mine_triplets: anchor out of range");
    std::size_t best_pos = T, best_neg = T;
    double far_pos = -1.0;
    double near_neg = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < T; ++u) {
      if (u == t) continue;
      const double r = fisher_ratio(seq.mean[t], seq.std[t], seq.mean[u], seq.std[u]);
      const double d = distance(embeddings, t, u);
      if (in_positive_set(r)) {
        if (d > far_pos) {
          far_pos = d;
          best_pos = u;
        }
      } else if (d < near_neg) {
        near_neg = d;
        best_neg = u;
      }
    }
    if (best_pos < T && best_neg < T) out.push_back({t, best_pos, best_neg});
  }
  return out;
}

std::vector<Triplet> mine_triplets(const TrainingSequence& seq, const ModelWeights& wv,
                                   std::span<const std::size_t> anchors) {
  const ForwardCache cache = forward_cached(wv, seq.phi, Mode::eval);
  return mine_triplets(seq, cache.hidden(embedding_layer(wv)), anchors);
}

ValueLoss loss_value_function(const ModelWeights& wv, const TrainingSequence& seq,
                              std::span<const Triplet> triplets, double gamma, bool use_oe) {
  seq.validate();
  if (!(gamma > 0.0)) throw Error("value loss: gamma must be positive");
  const ForwardCache cache = forward_cached(wv, seq.phi, Mode::train);
  return loss_from_cache(wv, cache, seq, triplets, gamma, use_oe);
}

void train_value_function(ModelWeights& wv, const TrainingSequence& seq,
                          const ValueTrainConfig& cfg, Rng& rng, AdamState* adam) {
  seq.validate();
  AdamState local(wv.params().size());
  AdamState& state = adam ? *adam : local;
  const std::size_t T = seq.length();
  const std::size_t n_anchors = std::min(cfg.anchors, T);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const ForwardCache cache = forward_cached(wv, seq.phi, Mode::train);
    std::vector<Triplet> triplets;
    if (cfg.use_oe) {
      const auto anchors = sample_without_replacement(T, n_anchors, rng);
      triplets = mine_triplets(seq, cache.hidden(embedding_layer(wv)), anchors);
    }
    const ValueLoss loss = loss_from_cache(wv, cache, seq, triplets, cfg.gamma, cfg.use_oe);
    adam_step(state, wv, loss.grads, cfg.lr);
    update_running_stats(wv, cache);
  }
}

double prediction_error(const ModelWeights& wv, std::span<const TrainingSequence> seqs) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const TrainingSequence& seq : seqs) {
    const auto pred = predict_batch(wv, seq.phi);
    for (std::size_t t = 0; t < seq.length(); ++t) {
      sum += std::abs(pred[t] - seq.mean[t]);
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace metricopt
