#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualfilter/dual_filter.hpp"
#include "dualfilter/model.hpp"

namespace dualfilter {

enum class Method { kalman, smoothing, wiener_hopf, dual };

inline constexpr Method kAllMethods[] = {Method::kalman, Method::smoothing, Method::wiener_hopf,
                                         Method::dual};

std::string method_name(Method method);
std::optional<Method> parse_method(const std::string& name);

/// Paths for trajectories 0..count-1, path n drawn with derive_seed(seed, n).
std::vector<SampledPath> sample_batch(const Model& model, std::int64_t count, std::uint64_t seed);
std::vector<SampledPath> sample_batch_serial(const Model& model, std::int64_t count,
                                             std::uint64_t seed);

struct BatchPredictions {
  std::vector<Method> methods;
  /// z_hat[k][n]: prediction of method k on trajectory n.
  std::vector<std::vector<Vector>> z_hat;
  /// Dual solves, one per row of C_T (empty if the dual method is absent).
  std::vector<SolveReport> dual_reports;
  bool dual_converged = true;
};

/// Zhat_{T|T-1} for every trajectory and method. `paths` may be longer than
/// the model horizon; only Z_0..Z_{T-1} are read. Model-only work (weights,
/// dual controls) is done once; per-trajectory work runs in parallel.
BatchPredictions predict_batch(const Model& model, const std::vector<SampledPath>& paths,
                               const std::vector<Method>& methods,
                               const SolveOptions& options = {});
/// Single-threaded reference for predict_batch; bit-identical output.
BatchPredictions predict_batch_serial(const Model& model, const std::vector<SampledPath>& paths,
                                      const std::vector<Method>& methods,
                                      const SolveOptions& options = {});

/// Largest |Zhat_a - Zhat_b| / (1 + |Zhat_ref|) over method pairs, trajectories
/// and components, where ref is the dual prediction when present.
double max_pairwise_discrepancy(const BatchPredictions& predictions);

}  // namespace dualfilter
