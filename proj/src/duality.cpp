#include "dualfilter/duality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dualfilter/rng.hpp"

namespace dualfilter {

double estimator_value(const Model& model, const ControlSequence& u, const VectorSeq& dual_states,
                       const VectorSeq& observations) {
  const int T = model.horizon();
  if (static_cast<int>(observations.size()) < T)
    throw ShapeError("estimator needs observations Z_0..Z_{T-1}");
  double s = dual_states[0].dot(model.init_mean());
  for (int t = 0; t < T; ++t) s -= u.at(t).dot(observations[t]);
  return s;
}

double estimator_value(const Model& model, const ControlSequence& u, const Vector& f,
                       const VectorSeq& observations) {
  return estimator_value(model, u, backward_pass(model, u, f), observations);
}

namespace {

struct PathTerms {
  double error;     // f^T X_T - S_T
  double residual;  // pairing identity mismatch
  double tolerance;
};

PathTerms path_terms(const Model& model, const SampledPath& path, const ControlSequence& u,
                     const Vector& f, const VectorSeq& y) {
  const int T = model.horizon();
  const double target = f.dot(path.states[T]);
  const double error = target - estimator_value(model, u, y, path.observations);
  double rhs = y[0].dot(path.noise_init - model.init_mean());
  for (int t = 1; t <= T; ++t) rhs += y[t].dot(path.noise_process[t]);
  for (int t = 0; t < T; ++t) rhs += u.at(t).dot(path.noise_obs[t]);
  return {error, std::abs(error - rhs), 1e-10 * (1.0 + std::abs(target))};
}

// Runs the paths and returns per-path terms in path order.
std::vector<PathTerms> evaluate_paths(const Model& model, const ControlSequence& u,
                                      const Vector& f, std::int64_t samples, std::uint64_t seed,
                                      bool parallel) {
  const NoiseFactors factors(model);
  const VectorSeq y = backward_pass(model, u, f);
  std::vector<PathTerms> terms(static_cast<std::size_t>(samples));
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t n = 0; n < samples; ++n) {
    const SampledPath path = sample_path(model, factors, derive_seed(seed, static_cast<std::uint64_t>(n)));
    terms[static_cast<std::size_t>(n)] = path_terms(model, path, u, f, y);
  }
  return terms;
}

DualityReport summarize(const Model& model, const ControlSequence& u, const Vector& f,
                        const std::vector<PathTerms>& terms) {
  DualityReport report;
  report.samples = static_cast<std::int64_t>(terms.size());
  report.cost = dual_cost(model, u, f);

  CompensatedSum sum;
  CompensatedSum floor_sum;
  for (const auto& p : terms) {
    sum.add(0.5 * p.error * p.error);
    floor_sum.add(0.5 * p.tolerance * p.tolerance);
    report.pairing_max = std::max(report.pairing_max, p.residual);
    if (!(p.residual <= p.tolerance)) report.pairing_ok = false;
  }
  const double n = static_cast<double>(terms.size());
  report.mse = sum.value() / n;
  CompensatedSum squares;
  for (const auto& p : terms) {
    const double dev = 0.5 * p.error * p.error - report.mse;
    squares.add(dev * dev);
  }
  report.standard_error = n > 1 ? std::sqrt(squares.value() / (n - 1) / n) : 0.0;
  // The floor admits the roundoff that the pairing tolerance already allows
  // on each error, which matters only when every error is (nearly) zero.
  const double floor = floor_sum.value() / n;
  report.pass = report.pairing_ok &&
                std::abs(report.mse - report.cost) <= kDualityBand * report.standard_error + floor;
  return report;
}

}  // namespace

double pairing_residual(const Model& model, const SampledPath& path, const ControlSequence& u,
                        const Vector& f) {
  return path_terms(model, path, u, f, backward_pass(model, u, f)).residual;
}

double pairing_tolerance(const Model& model, const SampledPath& path, const Vector& f) {
  return 1e-10 * (1.0 + std::abs(f.dot(path.states[model.horizon()])));
}

double exact_mse(const Model& model, const ControlSequence& u, const Vector& f) {
  // Dual states by scattering each y_t into its predecessors, then the three
  // noise contributions accumulated separately from the latest time back.
  const int T = model.horizon();
  if (f.size() != model.state_dim()) throw ShapeError("terminal vector has wrong length");
  VectorSeq y(T + 1, Vector::Zero(model.state_dim()));
  y[T] = f;
  for (int t = T; t >= 1; --t) {
    y[t - 1] += model.C(t - 1).transpose() * u.at(t - 1);
    for (int s = 1; s <= model.memory(t); ++s) y[t - s] += model.A(t, s).transpose() * y[t];
  }
  CompensatedSum process;
  for (int t = T; t >= 1; --t) process.add((model.Q(t) * y[t]).dot(y[t]));
  CompensatedSum observation;
  for (int t = T - 1; t >= 0; --t) observation.add((model.R(t) * u.at(t)).dot(u.at(t)));
  const double initial = (model.init_cov() * y[0]).dot(y[0]);
  return 0.5 * initial + 0.5 * process.value() + 0.5 * observation.value();
}

DualityReport verify_duality(const Model& model, const ControlSequence& u, const Vector& f,
                             std::int64_t samples, std::uint64_t seed) {
  if (samples < 2) throw ShapeError("duality check needs at least two samples");
  return summarize(model, u, f, evaluate_paths(model, u, f, samples, seed, true));
}

DualityReport verify_duality_serial(const Model& model, const ControlSequence& u,
                                    const Vector& f, std::int64_t samples, std::uint64_t seed) {
  if (samples < 2) throw ShapeError("duality check needs at least two samples");
  return summarize(model, u, f, evaluate_paths(model, u, f, samples, seed, false));
}

}  // namespace dualfilter
