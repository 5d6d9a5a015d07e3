#include "filtstab/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

namespace filtstab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng stream_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ trial) ^ (stream * 0xd1342543de82ef95ULL));
  return Rng(key);
}

namespace streams {
std::uint64_t inner(std::size_t window, std::size_t state, std::size_t replicate, bool observation) {
  return 1000 + ((static_cast<std::uint64_t>(window) * 4096 + state) * 16 + replicate) * 2 + (observation ? 1 : 0);
}
}  // namespace streams

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FILTSTAB_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      // unparsable cap is ignored
    }
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 16) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MeanEstimate mean_estimate(std::span<const double> samples) {
  MeanEstimate est;
  est.n = samples.size();
  if (est.n == 0) return est;
  est.mean = pairwise_sum(samples) / static_cast<double>(est.n);
  if (est.n < 2) return est;
  std::vector<double> sq(samples.size());
  std::transform(samples.begin(), samples.end(), sq.begin(), [&](double v) { return (v - est.mean) * (v - est.mean); });
  const double var = pairwise_sum(sq) / static_cast<double>(est.n - 1);
  est.standard_error = std::sqrt(var / static_cast<double>(est.n));
  return est;
}

double mean_covariance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("mean_covariance: sample sizes differ");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = pairwise_sum(a) / static_cast<double>(n);
  const double mb = pairwise_sum(b) / static_cast<double>(n);
  std::vector<double> prod(n);
  for (std::size_t i = 0; i < n; ++i) prod[i] = (a[i] - ma) * (b[i] - mb);
  return pairwise_sum(prod) / static_cast<double>(n - 1) / static_cast<double>(n);
}

}  // namespace filtstab
