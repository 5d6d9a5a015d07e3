#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace filtstab {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Generator for one (trial, stream) pair. The state depends only on the
/// three integers, so trials are reproducible in any execution order.
Rng stream_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream);

namespace streams {
inline constexpr std::uint64_t kSignal = 0;
inline constexpr std::uint64_t kObservation = 1;
/// Inner continuation started at window `window` from `state`.
std::uint64_t inner(std::size_t window, std::size_t state, std::size_t replicate, bool observation);
}  // namespace streams

/// Number of workers: hardware concurrency capped by FILTSTAB_THREADS.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). The first exception thrown by any
/// iteration is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

double pairwise_sum(std::span<const double> values);

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

MeanEstimate mean_estimate(std::span<const double> samples);

/// Sample covariance of paired samples divided by n (covariance of the means).
double mean_covariance(std::span<const double> a, std::span<const double> b);

}  // namespace filtstab
