#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualfilter/batch.hpp"
#include "dualfilter/bench.hpp"
#include "dualfilter/dual_filter.hpp"
#include "dualfilter/model.hpp"
#include "dualfilter/presets.hpp"

namespace dualfilter {

using Json = nlohmann::json;

/// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

/// Model document, schema 1:
///   { "schema": 1, "horizon": T, "order": tau, "dims": {"state": d, "obs": m},
///     "init_mean": [..], "init_cov": [[..], ..],
///     "transitions": [ [A_{1,1}], [A_{2,1}, A_{2,2}], .. ],   // T entries
///     "observation": [C_0 .. C_T], "process_noise": [Q_1 .. Q_T],
///     "obs_noise": [R_0 .. R_T] }
/// Matrices are lists of rows; a bare number stands for a 1x1 matrix.
Model model_from_json(const Json& doc);
Json model_to_json(const Model& model);

enum class ExperimentMode { predict, equivalence, duality, controls, scaling };

std::string mode_name(ExperimentMode mode);
std::optional<ExperimentMode> parse_mode(const std::string& name);

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::predict;
  std::optional<Preset> preset;
  PresetParams params;
  std::optional<Model> model;  // inline model when no preset is given
  std::vector<int> horizons;
  std::int64_t trajectories = 100;
  std::uint64_t seed = 42;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::string output_dir;  // empty: caller decides
  SolveOptions solver;
  std::vector<double> control_scales{1.0};
  std::vector<OrderMode> scaling_modes{OrderMode::fixed, OrderMode::full};
  int fixed_order = 2;
  std::int64_t memory_budget_bytes = 8LL << 30;
  double equivalence_tol = 1e-8;
};

/// Parses an experiment document. Relative "model_file" paths resolve
/// against `base_dir`.
ExperimentConfig experiment_from_json(const Json& doc, const std::string& base_dir = ".");

/// Reads JSON from disk; IoError when unreadable, ConfigError when not JSON.
Json read_json_file(const std::string& path);

ExperimentConfig load_experiment(const std::string& path);

/// Canonical form used for hashing: every field that influences the
/// artifacts, output directory excluded.
Json canonical_json(const ExperimentConfig& config);

/// 16 hex digits of FNV-1a over the canonical form.
std::string config_hash(const ExperimentConfig& config);

/// Model for one horizon of the experiment.
Model experiment_model(const ExperimentConfig& config, int horizon);

/// Methods in canonical order without duplicates.
std::vector<Method> canonical_methods(const std::vector<Method>& methods);

/// Parses "a,b,c"; ConfigError on unknown names.
std::vector<Method> parse_method_list(const std::string& text);

}  // namespace dualfilter
