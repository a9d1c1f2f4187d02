#include "dualfilter/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include "dualfilter/baselines.hpp"
#include "dualfilter/op_counter.hpp"

namespace dualfilter {

std::string order_mode_name(OrderMode mode) { return mode == OrderMode::fixed ? "fixed" : "full"; }

std::optional<OrderMode> parse_order_mode(const std::string& name) {
  if (name == "fixed") return OrderMode::fixed;
  if (name == "full") return OrderMode::full;
  return std::nullopt;
}

std::int64_t memory_estimate(Method method, const ModelDims& dims) {
  const std::int64_t T = dims.horizon;
  const std::int64_t d = dims.state_dim;
  const std::int64_t m = dims.obs_dim;
  switch (method) {
    case Method::dual:
      return 2 * (T + 1) * d + (2 * dims.dual_memory + 5) * T * m;
    case Method::kalman:
      return (T + 1) * (T + 1) * d * d + (T + 1) * d * (1 + m);
    case Method::smoothing:
      return T * T * (d + m) * (d + m) + T * T * m * m + T * (d + m);
    case Method::wiener_hopf:
      return T * T * (d + m) * (d + m) + 2 * T * T * m * m + T * (d + m);
  }
  return 0;
}

Model sweep_model(const SweepOptions& options, int horizon, OrderMode mode) {
  Model base = build_preset(options.preset, horizon, options.params);
  if (mode == OrderMode::fixed) {
    if (base.order() <= options.fixed_order) return base;
    return with_order(base, options.fixed_order);
  }
  if (base.order() == horizon) return base;
  return with_full_order(base);
}

namespace {

ScalingRow run_cell(const Model& model, const SampledPath& path, Method method, OrderMode mode,
                    const SweepOptions& options) {
  ScalingRow row;
  row.method = method;
  row.horizon = model.horizon();
  row.mode = mode;
  ModelDims dims{model.horizon(), model.order(), model.state_dim(), model.obs_dim(),
                 options.solver.memory};
  row.memory_slots = memory_estimate(method, dims);
  if (method != Method::dual &&
      row.memory_slots > options.memory_budget_bytes / static_cast<std::int64_t>(sizeof(double))) {
    row.skipped = true;
    row.skip_reason = "memory estimate above budget";
    return row;
  }

  const VectorSeq past(path.observations.begin(), path.observations.begin() + model.horizon());
  OpCounter counter;
  const auto start = std::chrono::steady_clock::now();
  switch (method) {
    case Method::kalman:
      kalman_growing_predict(model, past, &counter);
      break;
    case Method::smoothing:
      batch_smoothing_predict(model, past, &counter);
      break;
    case Method::wiener_hopf:
      wiener_hopf_predict(model, past, &counter);
      break;
    case Method::dual: {
      const Prediction p = predict_next(model, past, options.solver, &counter);
      for (const auto& r : p.reports) row.iterations += r.iterations;
      row.converged = p.converged;
      break;
    }
  }
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  row.ops = counter.total();
  row.ops_per_iteration = row.iterations > 0 ? row.ops / row.iterations : 0;
  return row;
}

}  // namespace

std::vector<ScalingRow> run_scaling_sweep(const SweepOptions& options) {
  std::vector<ScalingRow> rows;
  for (OrderMode mode : options.modes) {
    for (int T : options.horizons) {
      if (T < 2) throw ShapeError("scaling horizons must be at least 2");
      const Model model = sweep_model(options, T, mode);
      const SampledPath path = sample_path(model, options.seed);
      for (Method method : options.methods) rows.push_back(run_cell(model, path, method, mode, options));
    }
  }
  return rows;
}

std::optional<double> loglog_slope(const std::vector<ScalingRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.skipped || r.ops <= 0) continue;
    const double x = std::log(static_cast<double>(r.horizon));
    const double y = std::log(static_cast<double>(r.ops));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / denom;
}

std::vector<ScalingRow> select(const std::vector<ScalingRow>& rows, Method method, OrderMode mode) {
  std::vector<ScalingRow> out;
  for (const auto& r : rows)
    if (r.method == method && r.mode == mode) out.push_back(r);
  std::sort(out.begin(), out.end(),
            [](const ScalingRow& a, const ScalingRow& b) { return a.horizon < b.horizon; });
  return out;
}

std::optional<double> ops_at(const std::vector<ScalingRow>& series, int horizon) {
  std::vector<const ScalingRow*> measured;
  for (const auto& r : series) {
    if (r.skipped || r.ops <= 0) continue;
    if (r.horizon == horizon) return static_cast<double>(r.ops);
    measured.push_back(&r);
  }
  if (measured.size() < 2) return std::nullopt;
  std::sort(measured.begin(), measured.end(),
            [](const ScalingRow* a, const ScalingRow* b) { return a->horizon < b->horizon; });
  const ScalingRow& lo = *measured[measured.size() - 2];
  const ScalingRow& hi = *measured.back();
  const double k = std::log(static_cast<double>(hi.ops) / static_cast<double>(lo.ops)) /
                   std::log(static_cast<double>(hi.horizon) / static_cast<double>(lo.horizon));
  return static_cast<double>(hi.ops) * std::pow(static_cast<double>(horizon) / hi.horizon, k);
}

}  // namespace dualfilter
