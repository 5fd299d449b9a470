#pragma once

// Reference computations used to check the library. None of these call into
// the code they check; they are deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

// Central differences of a scalar function.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = fn(x);
    x[i] = keep - h;
    const double down = fn(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
  if (a.size() != b.size()) throw std::invalid_argument("max_rel_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_error(a[i], b[i], floor));
  return worst;
}

// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

struct GpPoint {
  double mean;
  double var;  // predictive, noise included
};

// Closed-form GP posterior with an RBF kernel and the observation mean as
// prior mean, via an explicit linear solve per query. `jitter` is added to the
// kernel diagonal only, not to the predictive variance.
inline std::vector<GpPoint> gp_direct(const std::vector<double>& t, const std::vector<double>& y,
                                      double length, double signal, double noise,
                                      const std::vector<double>& queries, double jitter = 0.0) {
  const std::size_t n = t.size();
  auto k = [&](double a, double b) {
    const double d = (a - b) / length;
    return signal * std::exp(-0.5 * d * d);
  };
  const double mu = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<std::vector<double>> K(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) K[i][j] = k(t[i], t[j]) + (i == j ? noise + jitter : 0.0);
  }
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = y[i] - mu;
  const auto alpha = solve(K, centered);
  std::vector<GpPoint> out;
  for (double q : queries) {
    std::vector<double> ks(n);
    for (std::size_t i = 0; i < n; ++i) ks[i] = k(q, t[i]);
    const auto v = solve(K, ks);
    double m = mu, explained = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m += ks[i] * alpha[i];
      explained += ks[i] * v[i];
    }
    out.push_back({m, signal - explained + noise});
  }
  return out;
}

// Average precision straight from its definition: for every positive, the
// precision among all examples whose score is at least its score.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  double total = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++positives;
    int above = 0, above_pos = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++above;
        above_pos += labels[j] == 1;
      }
    }
    total += static_cast<double>(above_pos) / above;
  }
  return total / positives;
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double c = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return c / std::sqrt(va * vb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Plain batch-gradient logistic regression; returns the training error rate.
inline double logistic_error_rate(const std::vector<std::vector<double>>& x,
                                  const std::vector<int>& y, int epochs = 300, double lr = 0.5) {
  const std::size_t p = x.front().size();
  std::vector<double> w(p, 0.0);
  double b = 0.0;
  const double n = static_cast<double>(x.size());
  for (int e = 0; e < epochs; ++e) {
    std::vector<double> gw(p, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = b;
      for (std::size_t j = 0; j < p; ++j) z += w[j] * x[i][j];
      const double r = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t j = 0; j < p; ++j) gw[j] += r * x[i][j];
      gb += r;
    }
    for (std::size_t j = 0; j < p; ++j) w[j] -= lr * gw[j] / n;
    b -= lr * gb / n;
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < p; ++j) z += w[j] * x[i][j];
    wrong += (z >= 0.0 ? 1 : 0) != y[i];
  }
  return static_cast<double>(wrong) / n;
}

// Two-dimensional problem whose surrogate loss and metric disagree:
//   loss(phi)   = 0.5 |phi - a|^2,  a = (0.5, 0.5)
//   metric(phi) = 0.05 + 0.25 |phi - b|^2,  b = (-0.5, -0.5)
struct MismatchToy {
  static constexpr double a[2] = {0.5, 0.5};
  static constexpr double b[2] = {-0.5, -0.5};

  static double loss(const double* phi) {
    const double u = phi[0] - a[0], v = phi[1] - a[1];
    return 0.5 * (u * u + v * v);
  }
  static void loss_grad(const double* phi, double* g) {
    g[0] = phi[0] - a[0];
    g[1] = phi[1] - a[1];
  }
  static double metric(const double* phi) {
    const double u = phi[0] - b[0], v = phi[1] - b[1];
    return 0.05 + 0.25 * (u * u + v * v);
  }
  static double distance_to_metric_argmin(const double* phi) {
    return std::hypot(phi[0] - b[0], phi[1] - b[1]);
  }
};

}  // namespace oracle
