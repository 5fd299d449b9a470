#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "metricopt/error.hpp"
#include "metricopt/gp.hpp"
#include "metricopt/rng.hpp"
#include "oracles.hpp"

using namespace metricopt;

namespace {

std::vector<double> steps_to(std::size_t T) {
  std::vector<double> s;
  for (std::size_t t = 1; t <= T; ++t) s.push_back(static_cast<double>(t));
  return s;
}

}  // namespace

TEST_CASE("single noiseless observation is interpolated exactly") {
  const std::vector<Observation> obs{{5.0, 0.3}};
  RBFParams p;
  p.noise_var = 1e-14;
  p.signal_var = 0.5;
  const std::vector<double> q{5.0};
  const auto tr = gp_posterior(obs, p, q);
  CHECK(tr.mean[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(tr.std[0] == kStdFloor);
}

TEST_CASE("two observations interpolate symmetrically") {
  const std::vector<Observation> obs{{2.0, 0.2}, {8.0, 0.6}};
  RBFParams p;
  p.length_scale = 3.0;
  const std::vector<double> q{5.0};
  CHECK(gp_posterior(obs, p, q).mean[0] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("three observations match the direct-solve oracle") {
  const std::vector<Observation> obs{{3.0, 0.31}, {11.0, 0.18}, {40.0, 0.27}};
  RBFParams p;
  p.length_scale = 6.5;
  p.signal_var = 0.02;
  p.noise_var = 3e-4;
  const auto q = steps_to(50);
  const auto got = gp_posterior(obs, p, q);
  const auto want = oracle::gp_direct({3, 11, 40}, {0.31, 0.18, 0.27}, 6.5, 0.02, 3e-4, q, p.jitter);
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(std::abs(got.raw_mean[i] - want[i].mean) < 1e-8);
    CHECK(std::abs(got.raw_var[i] - want[i].var) < 1e-8);
  }
}

TEST_CASE("posterior properties on random instances") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto q = steps_to(40);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t K = 2 + trial % 8;
    auto idx = sample_without_replacement(40, K, rng);
    std::sort(idx.begin(), idx.end());
    std::vector<Observation> obs;
    for (auto i : idx) obs.push_back({static_cast<double>(i + 1), u(rng)});
    RBFParams p;
    p.length_scale = 1.0 + 20.0 * u(rng);
    p.signal_var = 0.05 + u(rng);
    p.noise_var = 1e-4;
    const auto full = gp_posterior(obs, p, q);
    const auto fewer = gp_posterior(std::span<const Observation>(obs.data(), K - 1), p, q);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(full.raw_var[i] <= p.signal_var + p.noise_var);
      CHECK(full.raw_var[i] <= fewer.raw_var[i] + 1e-12);
      CHECK(full.std[i] >= kStdFloor);
      CHECK(full.mean[i] >= 0.0);
      CHECK(full.mean[i] <= 1.0);
    }
  }
}

TEST_CASE("well separated observations are nearly interpolated under small noise") {
  Rng rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Observation> obs;
    for (int k = 0; k < 6; ++k) obs.push_back({1.0 + 6.0 * k, u(rng)});
    RBFParams p;
    p.length_scale = 1.0;
    p.signal_var = 0.05 + u(rng);
    p.noise_var = 1e-4;
    for (const auto& o : obs) {
      const std::vector<double> at{o.step};
      CHECK(std::abs(gp_posterior(obs, p, at).raw_mean[0] - o.value) <= 3.0 * std::sqrt(p.noise_var));
    }
  }
}

TEST_CASE("means are clamped, raw values kept") {
  const std::vector<Observation> obs{{1.0, 0.99}, {2.0, 1.0}, {3.0, 0.999}};
  RBFParams p;
  p.length_scale = 1.0;
  p.signal_var = 1.0;
  const std::vector<double> q{2.5};
  const auto tr = gp_posterior(obs, p, q);
  CHECK(tr.mean[0] <= 1.0);
  CHECK(tr.mean[0] == std::clamp(tr.raw_mean[0], 0.0, 1.0));
}

TEST_CASE("hyperparameter fallback and ties") {
  const std::vector<Observation> two{{3.0, 0.4}, {9.0, 0.2}};
  const RBFParams fb = select_hyperparams(two, 50.0);
  CHECK(fb.length_scale == 5.0);
  CHECK(fb.noise_var == 1e-3);

  const std::vector<Observation> flat{{3.0, 0.25}, {20.0, 0.25}, {41.0, 0.25}, {47.0, 0.25}};
  const RBFParams c = select_hyperparams(flat, 50.0);
  CHECK(c.length_scale == 25.0);
}

TEST_CASE("slow trend with tiny noise selects the smallest noise") {
  std::vector<Observation> obs;
  for (double t : {2.0, 9.0, 17.0, 26.0, 33.0, 45.0}) obs.push_back({t, 0.5 - 0.004 * t});
  const RBFParams p = select_hyperparams(obs, 50.0);
  CHECK(p.noise_var == 1e-4);
  // The selected point is the best of the grid.
  for (double ls : {2.5, 5.0, 10.0, 25.0}) {
    for (double nv : {1e-4, 1e-3, 1e-2}) {
      RBFParams alt = p;
      alt.length_scale = ls;
      alt.noise_var = nv;
      CHECK(log_marginal_likelihood(obs, alt) <= log_marginal_likelihood(obs, p));
    }
  }
}

TEST_CASE("interpolation returns a dense series over 1..T") {
  const std::vector<Observation> obs{{4.0, 0.3}, {30.0, 0.2}, {48.0, 0.1}};
  const auto tr = interpolate_metrics(obs, 50);
  CHECK(tr.steps.size() == 50);
  CHECK(tr.steps.front() == 1.0);
  CHECK(tr.steps.back() == 50.0);
}

TEST_CASE("invalid observations are rejected") {
  const std::vector<Observation> unordered{{5.0, 0.1}, {3.0, 0.2}};
  RBFParams p;
  const std::vector<double> q{1.0};
  CHECK_THROWS(gp_posterior(unordered, p, q));
  CHECK_THROWS(gp_posterior(std::span<const Observation>{}, p, q));
  RBFParams bad;
  bad.length_scale = 0.0;
  const std::vector<Observation> one{{1.0, 0.5}};
  CHECK_THROWS(gp_posterior(one, bad, q));
}
