#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualfilter/batch.hpp"
#include "dualfilter/dual_filter.hpp"
#include "dualfilter/presets.hpp"

namespace dualfilter {

/// fixed: at most `fixed_order` lags per step; full: order = T with the bank
/// padded by zero blocks.
enum class OrderMode { fixed, full };

std::string order_mode_name(OrderMode mode);
std::optional<OrderMode> parse_order_mode(const std::string& name);

struct ModelDims {
  std::int64_t horizon = 0;
  std::int64_t order = 0;
  std::int64_t state_dim = 1;
  std::int64_t obs_dim = 1;
  int dual_memory = 10;  // quasi-Newton pairs kept by the dual solver
};

/// Working-set size in scalar slots. Model storage is excluded.
///   dual:        2(T+1)d + (2M + 5)Tm            (y, p, u, gradient, trial, M pairs, Z)
///   kalman:      (T+1)^2 d^2 + (T+1)d(1 + m)     (covariance, estimate, gain)
///   smoothing:   T^2 (d + m)^2 + T^2 m^2 + T(d + m)
///   wiener-hopf: T^2 (d + m)^2 + 2 T^2 m^2 + T(d + m)
std::int64_t memory_estimate(Method method, const ModelDims& dims);

struct ScalingRow {
  Method method = Method::dual;
  int horizon = 0;
  OrderMode mode = OrderMode::fixed;
  std::int64_t ops = 0;             // 0 when skipped
  std::int64_t memory_slots = 0;
  int iterations = 0;               // dual filter only, summed over rows of C_T
  bool converged = true;            // dual filter only
  std::int64_t ops_per_iteration = 0;
  double wall_seconds = 0.0;        // informational
  bool skipped = false;
  std::string skip_reason;
};

struct SweepOptions {
  Preset preset = Preset::tracking;
  PresetParams params;
  std::vector<int> horizons;
  std::vector<OrderMode> modes{OrderMode::fixed, OrderMode::full};
  std::vector<Method> methods{Method::kalman, Method::smoothing, Method::wiener_hopf, Method::dual};
  int fixed_order = 2;
  /// Classical methods whose working set exceeds this are skipped.
  std::int64_t memory_budget_bytes = 8LL << 30;
  SolveOptions solver;
  std::uint64_t seed = 42;
};

/// Runs one prediction per (method, T, mode) cell with counters active and
/// returns rows ordered by (mode, T, method).
std::vector<ScalingRow> run_scaling_sweep(const SweepOptions& options);

/// Builds the model used by a sweep cell.
Model sweep_model(const SweepOptions& options, int horizon, OrderMode mode);

/// Least-squares slope of log(ops) against log(T) over the given rows
/// (skipped rows ignored). Returns nullopt with fewer than two points.
std::optional<double> loglog_slope(const std::vector<ScalingRow>& rows);

/// Rows of one (method, mode) series in ascending T.
std::vector<ScalingRow> select(const std::vector<ScalingRow>& rows, Method method, OrderMode mode);

/// Operation count of a series at `horizon`: the measured value when
/// present, otherwise a power-law extrapolation from the two largest
/// measured horizons.
std::optional<double> ops_at(const std::vector<ScalingRow>& series, int horizon);

}  // namespace dualfilter
