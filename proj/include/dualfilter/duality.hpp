#pragma once

#include <cmath>
#include <cstdint>

#include "dualfilter/dual_filter.hpp"
#include "dualfilter/model.hpp"

namespace dualfilter {

/// S_T = y_0^T mu0 - sum_t u_t^T Z_t with y from the backward pass.
double estimator_value(const Model& model, const ControlSequence& u, const Vector& f,
                       const VectorSeq& observations);
/// Same, with the dual states already computed.
double estimator_value(const Model& model, const ControlSequence& u, const VectorSeq& dual_states,
                       const VectorSeq& observations);

/// |(f^T X_T - S_T) - (y_0^T (X_0 - mu0) + sum y_t^T B_t + sum u_t^T W_t)|.
double pairing_residual(const Model& model, const SampledPath& path, const ControlSequence& u,
                        const Vector& f);

/// The pairing identity bound for one path, 1e-10 * (1 + |f^T X_T|).
double pairing_tolerance(const Model& model, const SampledPath& path, const Vector& f);

/// Closed-form mean-squared error of S_T, accumulated per noise source.
double exact_mse(const Model& model, const ControlSequence& u, const Vector& f);

struct DualityReport {
  double cost = 0.0;           // J_T(u; f)
  double mse = 0.0;            // Monte-Carlo mean of 1/2 |f^T X_T - S_T|^2
  double standard_error = 0.0;
  std::int64_t samples = 0;
  double pairing_max = 0.0;    // max absolute pairing residual
  bool pairing_ok = true;      // every path within its pairing tolerance
  bool pass = false;
};

/// Pass band of the Monte-Carlo comparison, in standard errors.
inline constexpr double kDualityBand = 4.0;

/// Draws `samples` seeded paths and compares the empirical mean of
/// 1/2 |f^T X_T - S_T|^2 with the dual cost. Paths are evaluated in
/// parallel; the reduction runs in path order with compensated summation,
/// so the report does not depend on the thread count.
DualityReport verify_duality(const Model& model, const ControlSequence& u, const Vector& f,
                             std::int64_t samples, std::uint64_t seed);

/// Single-threaded reference for verify_duality; bit-identical output.
DualityReport verify_duality_serial(const Model& model, const ControlSequence& u,
                                    const Vector& f, std::int64_t samples, std::uint64_t seed);

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) compensation_ += (sum_ - t) + x;
    else compensation_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace dualfilter
