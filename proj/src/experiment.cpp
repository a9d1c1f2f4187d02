#include "dualfilter/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "dualfilter/baselines.hpp"
#include "dualfilter/duality.hpp"

namespace dualfilter {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

class CsvTable {
 public:
  CsvTable(std::string name, std::vector<std::string> columns)
      : name_(std::move(name)), columns_(std::move(columns)) {}

  const std::string& name() const { return name_; }

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& operator<<(const std::string& v) {
    rows_.back().push_back(v);
    return *this;
  }
  CsvTable& operator<<(const char* v) { return *this << std::string(v); }
  CsvTable& operator<<(double v) { return *this << format_double(v); }
  CsvTable& operator<<(int v) { return *this << std::to_string(v); }
  CsvTable& operator<<(std::int64_t v) { return *this << std::to_string(v); }
  CsvTable& operator<<(bool v) { return *this << std::string(v ? "1" : "0"); }

  std::string render(const std::string& preamble) const {
    std::ostringstream os;
    os << preamble;
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
    os << '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
    return os.str();
  }

 private:
  std::string name_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

std::string timestamp_line() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string("# generated ") + buf + "\n";
}

// Writes every table or none of them.
std::vector<std::string> write_tables(const std::vector<CsvTable>& tables, const RunOptions& options) {
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create " + options.out_dir + ": " + ec.message());
  const std::string preamble = options.header_timestamp ? timestamp_line() : "";

  std::vector<fs::path> staged;
  std::vector<std::string> done;
  auto cleanup = [&] {
    std::error_code ignore;
    for (const auto& p : staged) fs::remove(p, ignore);
    for (const auto& p : done) fs::remove(p, ignore);
  };
  for (const auto& t : tables) {
    const fs::path tmp = fs::path(options.out_dir) / (t.name() + ".partial");
    staged.push_back(tmp);
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << t.render(preamble);
    out.close();
    if (!out) {
      cleanup();
      throw IoError("cannot write " + tmp.string());
    }
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const fs::path final_path = fs::path(options.out_dir) / tables[i].name();
    fs::rename(staged[i], final_path, ec);
    if (ec) {
      cleanup();
      throw IoError("cannot move " + staged[i].string() + " into place: " + ec.message());
    }
    done.push_back(final_path.string());
  }
  return done;
}

void log(const RunOptions& options, const std::string& line) {
  if (options.log) *options.log << line << '\n';
}

Vector terminal_row(const Model& model, int j) { return model.C(model.horizon()).row(j).transpose(); }

void require_converged(bool converged, int T) {
  if (!converged) throw NumericalFailure("dual solve did not converge at T = " + std::to_string(T));
}

// Predictions per horizon, shared by the predict and equivalence modes.
void run_predictions(const ExperimentConfig& c, const std::string& hash, const RunOptions& options,
                     CsvTable* predictions, CsvTable* equivalence, CsvTable& mse) {
  const int t_max = std::max(1, c.horizons.back());
  const Model base = experiment_model(c, t_max);
  const std::vector<SampledPath> paths = sample_batch(base, c.trajectories, c.seed);
  const int m = base.obs_dim();

  for (int T : c.horizons) {
    if (T == 0) {
      const Vector prior = prior_prediction(base);
      CompensatedSum sum;
      for (std::size_t n = 0; n < paths.size(); ++n) {
        const Vector truth = base.C(0) * paths[n].states[0];
        sum.add(0.5 * (truth - prior).squaredNorm());
        if (predictions)
          for (int i = 0; i < m; ++i)
            predictions->row() << static_cast<std::int64_t>(n) << 0 << "prior"
                               << paths[n].observations[0][i] << prior[i] << i << hash;
      }
      mse.row() << 0 << "prior" << c.trajectories << sum.value() / static_cast<double>(paths.size())
                << hash;
      continue;
    }
    const Model model = truncate(base, T);
    const BatchPredictions batch = predict_batch(model, paths, c.methods, c.solver);
    require_converged(batch.dual_converged, T);
    for (std::size_t k = 0; k < batch.methods.size(); ++k) {
      CompensatedSum sum;
      for (std::size_t n = 0; n < paths.size(); ++n) {
        const Vector truth = model.C(T) * paths[n].states[T];
        sum.add(0.5 * (truth - batch.z_hat[k][n]).squaredNorm());
      }
      mse.row() << T << method_name(batch.methods[k]) << c.trajectories
                << sum.value() / static_cast<double>(paths.size()) << hash;
    }
    if (predictions) {
      for (std::size_t n = 0; n < paths.size(); ++n)
        for (std::size_t k = 0; k < batch.methods.size(); ++k)
          for (int i = 0; i < m; ++i)
            predictions->row() << static_cast<std::int64_t>(n) << T << method_name(batch.methods[k])
                               << paths[n].observations[T][i] << batch.z_hat[k][n][i] << i << hash;
    }
    if (equivalence) {
      const double gap = max_pairwise_discrepancy(batch);
      equivalence->row() << T << c.trajectories << gap << (gap <= c.equivalence_tol) << hash;
      log(options, "T=" + std::to_string(T) + " max discrepancy " + format_double(gap));
    }
  }
}

std::vector<CsvTable> run_predict(const ExperimentConfig& c, const std::string& hash,
                                  const RunOptions& options) {
  CsvTable predictions("predictions.csv",
                       {"trajectory", "T", "method", "Z_true", "Z_hat", "component", "config_hash"});
  CsvTable mse("mse.csv", {"T", "method", "N", "mse", "config_hash"});
  run_predictions(c, hash, options, &predictions, nullptr, mse);
  return {std::move(predictions), std::move(mse)};
}

std::vector<CsvTable> run_equivalence(const ExperimentConfig& c, const std::string& hash,
                                      const RunOptions& options) {
  CsvTable equivalence("equivalence.csv", {"T", "N", "max_discrepancy", "pass", "config_hash"});
  CsvTable mse("mse.csv", {"T", "method", "N", "mse", "config_hash"});
  run_predictions(c, hash, options, nullptr, &equivalence, mse);
  return {std::move(equivalence), std::move(mse)};
}

std::vector<CsvTable> run_duality(const ExperimentConfig& c, const std::string& hash,
                                  const RunOptions& options) {
  CsvTable table("duality.csv", {"T", "J", "mse_mc", "stderr", "pairing_max", "pass", "f_row",
                                 "scale", "N", "exact_mse", "config_hash"});
  for (int T : c.horizons) {
    const Model model = experiment_model(c, T);
    for (int j = 0; j < model.obs_dim(); ++j) {
      const Vector f = terminal_row(model, j);
      const DualSolution sol = solve_dual_control(model, f, c.solver);
      require_converged(sol.report.converged, T);
      for (double scale : c.control_scales) {
        const ControlSequence u(T, model.obs_dim(), scale * sol.control.values());
        const DualityReport r = verify_duality(model, u, f, c.trajectories, c.seed);
        table.row() << T << r.cost << r.mse << r.standard_error << r.pairing_max << r.pass << j
                    << scale << r.samples << exact_mse(model, u, f) << hash;
        log(options, "T=" + std::to_string(T) + " row " + std::to_string(j) + " scale " +
                         format_double(scale) + (r.pass ? " pass" : " FAIL"));
      }
    }
  }
  return {std::move(table)};
}

std::vector<CsvTable> run_controls(const ExperimentConfig& c, const std::string& hash,
                                   const RunOptions& options) {
  CsvTable table("controls.csv",
                 {"T", "method", "t", "u_component_index", "value", "f_row", "config_hash"});
  const bool any_weights = std::count(c.methods.begin(), c.methods.end(), Method::smoothing) +
                               std::count(c.methods.begin(), c.methods.end(), Method::wiener_hopf) >
                           0;
  if (std::find(c.methods.begin(), c.methods.end(), Method::kalman) != c.methods.end())
    log(options, "kalman has no control representation; skipped in controls mode");
  for (int T : c.horizons) {
    const Model model = experiment_model(c, T);
    std::optional<JointMoments> moments;
    if (any_weights) moments = compute_moments(model);
    for (Method method : c.methods) {
      if (method == Method::kalman) continue;
      std::optional<ProjectionWeights> weights;
      if (method == Method::smoothing) weights = batch_smoothing_weights(model, *moments);
      if (method == Method::wiener_hopf) weights = wiener_hopf_weights(model, *moments);
      for (int j = 0; j < model.obs_dim(); ++j) {
        const Vector f = terminal_row(model, j);
        ControlSequence u;
        if (weights) {
          u = control_from_weights(*weights, f);
        } else {
          DualSolution sol = solve_dual_control(model, f, c.solver);
          require_converged(sol.report.converged, T);
          u = std::move(sol.control);
        }
        for (int t = 0; t < T; ++t)
          for (int i = 0; i < model.obs_dim(); ++i)
            table.row() << T << method_name(method) << t << i << u.at(t)[i] << j << hash;
      }
    }
  }
  return {std::move(table)};
}

std::vector<CsvTable> run_scaling(const ExperimentConfig& c, const std::string& hash,
                                  const RunOptions& options) {
  SweepOptions sweep;
  sweep.preset = *c.preset;
  sweep.params = c.params;
  sweep.horizons = c.horizons;
  sweep.modes = c.scaling_modes;
  sweep.methods = c.methods;
  sweep.fixed_order = c.fixed_order;
  sweep.memory_budget_bytes = c.memory_budget_bytes;
  sweep.solver = c.solver;
  sweep.seed = c.seed;
  std::vector<ScalingRow> rows = run_scaling_sweep(sweep);
  std::stable_sort(rows.begin(), rows.end(), [](const ScalingRow& a, const ScalingRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.horizon != b.horizon) return a.horizon < b.horizon;
    return a.mode < b.mode;
  });
  CsvTable table("scaling.csv", {"method", "T", "mode", "ops", "memory_slots", "iterations",
                                 "ops_per_iteration", "converged", "skipped", "config_hash"});
  for (const auto& r : rows) {
    require_converged(r.converged, r.horizon);
    table.row() << method_name(r.method) << r.horizon << order_mode_name(r.mode) << r.ops
                << r.memory_slots << r.iterations << r.ops_per_iteration << r.converged << r.skipped
                << hash;
    log(options, method_name(r.method) + " T=" + std::to_string(r.horizon) + " " +
                     order_mode_name(r.mode) +
                     (r.skipped ? " skipped (" + r.skip_reason + ")"
                                : " ops " + std::to_string(r.ops) + " iterations " +
                                      std::to_string(r.iterations)));
  }
  for (OrderMode mode : c.scaling_modes)
    for (Method method : c.methods)
      if (auto slope = loglog_slope(select(rows, method, mode)))
        log(options, method_name(method) + " " + order_mode_name(mode) + " log-log slope " +
                         format_double(*slope));
  return {std::move(table)};
}

void validate_config_models(const ExperimentConfig& c) {
  const int t_max = std::max(1, c.horizons.back());
  const Model model = experiment_model(c, t_max);
  const auto violations = validate_model(model);
  if (!violations.empty()) {
    std::string msg = "invalid model:";
    for (const auto& v : violations) msg += " " + v.message() + ";";
    throw ConfigError(msg);
  }
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunResult result;
  try {
    const std::string hash = config_hash(config);
    if (config.mode != ExperimentMode::scaling) validate_config_models(config);
    std::vector<CsvTable> tables;
    switch (config.mode) {
      case ExperimentMode::predict: tables = run_predict(config, hash, options); break;
      case ExperimentMode::equivalence: tables = run_equivalence(config, hash, options); break;
      case ExperimentMode::duality: tables = run_duality(config, hash, options); break;
      case ExperimentMode::controls: tables = run_controls(config, hash, options); break;
      case ExperimentMode::scaling: tables = run_scaling(config, hash, options); break;
    }
    result.files = write_tables(tables, options);
  } catch (const ConfigError& e) {
    result.exit_code = kExitConfig;
    result.message = e.what();
  } catch (const ShapeError& e) {
    result.exit_code = kExitConfig;
    result.message = e.what();
  } catch (const NumericalFailure& e) {
    result.exit_code = kExitNumerical;
    result.message = e.what();
  } catch (const InvalidModelError& e) {
    result.exit_code = kExitNumerical;
    result.message = e.what();
  } catch (const IoError& e) {
    result.exit_code = kExitIo;
    result.message = e.what();
  } catch (const std::bad_alloc&) {
    result.exit_code = kExitNumerical;
    result.message = "out of memory";
  }
  return result;
}

}  // namespace dualfilter
