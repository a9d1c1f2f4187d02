#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace dualfilter {

/// Noise sources of a path. Each gets its own generator stream so that a
/// path drawn over a long horizon has the same prefix as one drawn over a
/// shorter horizon.
enum class NoiseStream : std::uint64_t { init = 0, process = 1, observation = 2 };

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of trajectory `index` in a batch started from `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x5851f42d4c957f2dULL));
}

/// std::mt19937_64 keyed by (seed, stream) through SplitMix64, paired with a
/// standard normal distribution. Reproducible bit-for-bit within one
/// standard library; across libraries only in distribution.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, NoiseStream stream)
      : engine_(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream) + 1))) {}

  double next() { return normal_(engine_); }

  Eigen::VectorXd next_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dualfilter
