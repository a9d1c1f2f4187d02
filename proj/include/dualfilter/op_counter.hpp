#pragma once

#include <algorithm>
#include <cstdint>

namespace dualfilter {

/// Analytic operation tally. Kernels charge one unit per scalar
/// multiply-add; a Cholesky factorization of order n is charged n^3/3 and a
/// triangular solve n^2/2 per right-hand side. Charges depend only on
/// dimensions, never on data, so two runs with equal shapes and iteration
/// counts produce equal tallies.
class OpCounter {
 public:
  /// (rows x inner) * (inner x cols)
  void gemm(std::int64_t rows, std::int64_t inner, std::int64_t cols) {
    multiply_adds_ += rows * inner * cols;
  }
  void gemv(std::int64_t rows, std::int64_t cols) { multiply_adds_ += rows * cols; }
  void axpy(std::int64_t n) { multiply_adds_ += n; }
  void dot(std::int64_t n) { multiply_adds_ += n; }

  void cholesky(std::int64_t n) { factorization_flops_ += n * n * n / 3; }
  void triangular_solve(std::int64_t n, std::int64_t rhs) {
    factorization_flops_ += n * n / 2 * rhs;
  }

  /// Records a live working set of `slots` scalars; keeps the maximum.
  void note_memory(std::int64_t slots) { peak_memory_slots_ = std::max(peak_memory_slots_, slots); }

  void add_wall_seconds(double s) { wall_seconds_ += s; }

  std::int64_t multiply_adds() const { return multiply_adds_; }
  std::int64_t factorization_flops() const { return factorization_flops_; }
  std::int64_t total() const { return multiply_adds_ + factorization_flops_; }
  std::int64_t peak_memory_slots() const { return peak_memory_slots_; }
  double wall_seconds() const { return wall_seconds_; }

  OpCounter& operator+=(const OpCounter& other) {
    multiply_adds_ += other.multiply_adds_;
    factorization_flops_ += other.factorization_flops_;
    peak_memory_slots_ = std::max(peak_memory_slots_, other.peak_memory_slots_);
    wall_seconds_ += other.wall_seconds_;
    return *this;
  }

 private:
  std::int64_t multiply_adds_ = 0;
  std::int64_t factorization_flops_ = 0;
  std::int64_t peak_memory_slots_ = 0;
  double wall_seconds_ = 0.0;
};

/// Null-safe helper so kernels can take an optional counter.
template <typename F>
inline void charge(OpCounter* counter, F&& f) {
  if (counter != nullptr) f(*counter);
}

}  // namespace dualfilter
