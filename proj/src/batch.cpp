#include "dualfilter/batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualfilter/baselines.hpp"
#include "dualfilter/rng.hpp"

namespace dualfilter {

std::string method_name(Method method) {
  switch (method) {
    case Method::kalman: return "kalman";
    case Method::smoothing: return "smoothing";
    case Method::wiener_hopf: return "wiener-hopf";
    case Method::dual: return "dual";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  return std::nullopt;
}

namespace {

std::vector<SampledPath> sample_impl(const Model& model, std::int64_t count, std::uint64_t seed,
                                     bool parallel) {
  const NoiseFactors factors(model);
  std::vector<SampledPath> paths(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t n = 0; n < count; ++n)
    paths[static_cast<std::size_t>(n)] =
        sample_path(model, factors, derive_seed(seed, static_cast<std::uint64_t>(n)));
  return paths;
}

BatchPredictions predict_impl(const Model& model, const std::vector<SampledPath>& paths,
                              const std::vector<Method>& methods, const SolveOptions& options,
                              bool parallel) {
  BatchPredictions out;
  out.methods = methods;
  out.z_hat.assign(methods.size(), std::vector<Vector>(paths.size()));
  const auto count = static_cast<std::int64_t>(paths.size());

  std::optional<JointMoments> moments;
  auto need_moments = [&]() -> const JointMoments& {
    if (!moments) moments = compute_moments(model);
    return *moments;
  };

  for (std::size_t k = 0; k < methods.size(); ++k) {
    auto& column = out.z_hat[k];
    switch (methods[k]) {
      case Method::kalman: {
#pragma omp parallel for schedule(dynamic) if (parallel)
        for (std::int64_t n = 0; n < count; ++n)
          column[static_cast<std::size_t>(n)] =
              kalman_growing_predict(model, paths[static_cast<std::size_t>(n)].observations).z_hat;
        break;
      }
      case Method::smoothing:
      case Method::wiener_hopf: {
        const ProjectionWeights w = methods[k] == Method::smoothing
                                        ? batch_smoothing_weights(model, need_moments())
                                        : wiener_hopf_weights(model, need_moments());
#pragma omp parallel for schedule(static) if (parallel)
        for (std::int64_t n = 0; n < count; ++n)
          column[static_cast<std::size_t>(n)] =
              predict_from_weights(model, w, paths[static_cast<std::size_t>(n)].observations);
        break;
      }
      case Method::dual: {
        const DualPredictor predictor(model, options);
        for (const auto& s : predictor.solutions()) out.dual_reports.push_back(s.report);
        out.dual_converged = predictor.converged();
#pragma omp parallel for schedule(static) if (parallel)
        for (std::int64_t n = 0; n < count; ++n)
          column[static_cast<std::size_t>(n)] =
              predictor.predict(paths[static_cast<std::size_t>(n)].observations);
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<SampledPath> sample_batch(const Model& model, std::int64_t count, std::uint64_t seed) {
  return sample_impl(model, count, seed, true);
}

std::vector<SampledPath> sample_batch_serial(const Model& model, std::int64_t count,
                                             std::uint64_t seed) {
  return sample_impl(model, count, seed, false);
}

BatchPredictions predict_batch(const Model& model, const std::vector<SampledPath>& paths,
                               const std::vector<Method>& methods, const SolveOptions& options) {
  return predict_impl(model, paths, methods, options, true);
}

BatchPredictions predict_batch_serial(const Model& model, const std::vector<SampledPath>& paths,
                                      const std::vector<Method>& methods,
                                      const SolveOptions& options) {
  return predict_impl(model, paths, methods, options, false);
}

double max_pairwise_discrepancy(const BatchPredictions& p) {
  const auto ref_it = std::find(p.methods.begin(), p.methods.end(), Method::dual);
  const std::size_t ref = ref_it == p.methods.end() ? 0 : static_cast<std::size_t>(ref_it - p.methods.begin());
  double worst = 0.0;
  for (std::size_t a = 0; a < p.methods.size(); ++a) {
    for (std::size_t b = a + 1; b < p.methods.size(); ++b) {
      for (std::size_t n = 0; n < p.z_hat[a].size(); ++n) {
        const Vector& za = p.z_hat[a][n];
        const Vector& zb = p.z_hat[b][n];
        const Vector& zr = p.z_hat[ref][n];
        for (Eigen::Index i = 0; i < za.size(); ++i) {
          const double gap = std::abs(za[i] - zb[i]) / (1.0 + std::abs(zr[i]));
          if (!std::isfinite(gap)) return std::numeric_limits<double>::infinity();
          worst = std::max(worst, gap);
        }
      }
    }
  }
  return worst;
}

}  // namespace dualfilter
