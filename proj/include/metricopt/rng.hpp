#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace metricopt {

using Rng = std::mt19937_64;

// Seed splitting: child = splitmix64(parent ^ fnv1a64(tag)). Every component
// that needs randomness derives its own stream from the run seed this way, so
// a component rerun in isolation sees the same numbers as inside a pipeline.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);

double standard_normal(Rng& rng);
void fill_normal(std::span<double> out, double stddev, Rng& rng);
std::vector<double> normal_vector(std::size_t n, double stddev, Rng& rng);

// k distinct indices from [0, n) in random order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace metricopt
