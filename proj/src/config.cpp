#include "dualfilter/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace dualfilter {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void expect_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) fail(where, "unknown key \"" + key + "\"");
  }
}

const Json& require(const Json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, "missing key \"" + key + "\"");
  return *it;
}

double number(const Json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(where, "expected a finite number");
  return x;
}

std::int64_t integer(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<std::int64_t>();
}

std::string text(const Json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

std::string item(const std::string& where, std::size_t i) {
  return where + "[" + std::to_string(i) + "]";
}

Matrix matrix(const Json& v, int rows, int cols, const std::string& where) {
  if (v.is_number()) {
    if (rows != 1 || cols != 1) fail(where, "a bare number only describes a 1x1 matrix");
    return Matrix::Constant(1, 1, number(v, where));
  }
  if (!v.is_array() || static_cast<int>(v.size()) != rows)
    fail(where, "expected " + std::to_string(rows) + " rows");
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const Json& row = v[i];
    const std::string rw = item(where, i);
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      fail(rw, "expected " + std::to_string(cols) + " columns");
    for (int j = 0; j < cols; ++j) out(i, j) = number(row[j], item(rw, j));
  }
  return out;
}

Vector vector(const Json& v, int n, const std::string& where) {
  if (v.is_number() && n == 1) return Vector::Constant(1, number(v, where));
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    fail(where, "expected " + std::to_string(n) + " entries");
  Vector out(n);
  for (int i = 0; i < n; ++i) out[i] = number(v[i], item(where, i));
  return out;
}

std::vector<Matrix> matrix_list(const Json& v, std::size_t count, int rows, int cols,
                                const std::string& where) {
  if (!v.is_array() || v.size() != count)
    fail(where, "expected " + std::to_string(count) + " matrices");
  std::vector<Matrix> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(matrix(v[i], rows, cols, item(where, i)));
  return out;
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_schema(const Json& doc, const std::string& where) {
  const Json& schema = require(doc, "schema", where);
  if (!schema.is_number_integer() || schema.get<int>() != kSchemaVersion)
    fail(where + ".schema", "unsupported schema version (expected 1)");
}

PresetParams params_from_json(const Json& v, PresetParams p) {
  const std::string where = "params";
  expect_keys(v, where,
              {"alpha", "dtheta", "q", "omega", "init_mean", "init_var", "process_var", "obs_var"});
  auto set = [&](const char* key, double& field) {
    if (v.contains(key)) field = number(v[key], where + "." + key);
  };
  set("alpha", p.alpha);
  set("dtheta", p.dtheta);
  set("q", p.q);
  set("omega", p.omega);
  set("init_mean", p.init_mean);
  set("init_var", p.init_var);
  set("process_var", p.process_var);
  set("obs_var", p.obs_var);
  return p;
}

std::vector<int> horizons_from_json(const Json& v) {
  std::vector<int> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::int64_t T = integer(v[i], item("horizons", i));
      if (T < 0 || T > (1 << 24)) fail(item("horizons", i), "horizon out of range");
      out.push_back(static_cast<int>(T));
    }
  } else if (v.is_object()) {
    expect_keys(v, "horizons", {"from", "to", "step", "doubling"});
    const std::int64_t from = integer(require(v, "from", "horizons"), "horizons.from");
    const std::int64_t to = integer(require(v, "to", "horizons"), "horizons.to");
    const bool doubling = v.contains("doubling") && v["doubling"].is_boolean() && v["doubling"].get<bool>();
    const std::int64_t step = v.contains("step") ? integer(v["step"], "horizons.step") : 1;
    if (from < 0 || to < from || to > (1 << 24)) fail("horizons", "invalid range");
    if (step < 1) fail("horizons.step", "must be positive");
    if (doubling && from < 1) fail("horizons", "doubling ranges start at 1 or above");
    for (std::int64_t T = from; T <= to; T = doubling ? 2 * T : T + step) out.push_back(static_cast<int>(T));
  } else {
    fail("horizons", "expected a list or a {from, to} range");
  }
  if (out.empty()) fail("horizons", "must not be empty");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SolveOptions solver_from_json(const Json& v) {
  SolveOptions o;
  const std::string where = "solver";
  expect_keys(v, where,
              {"max_iters", "grad_tol", "cost_rel_tol", "memory", "wolfe_c1", "wolfe_c2",
               "initial_step", "max_line_search_evals", "method"});
  if (v.contains("max_iters")) o.max_iters = static_cast<int>(integer(v["max_iters"], "solver.max_iters"));
  if (v.contains("grad_tol")) o.grad_tol = number(v["grad_tol"], "solver.grad_tol");
  if (v.contains("cost_rel_tol")) o.cost_rel_tol = number(v["cost_rel_tol"], "solver.cost_rel_tol");
  if (v.contains("memory")) o.memory = static_cast<int>(integer(v["memory"], "solver.memory"));
  if (v.contains("wolfe_c1")) o.wolfe_c1 = number(v["wolfe_c1"], "solver.wolfe_c1");
  if (v.contains("wolfe_c2")) o.wolfe_c2 = number(v["wolfe_c2"], "solver.wolfe_c2");
  if (v.contains("initial_step")) o.initial_step = number(v["initial_step"], "solver.initial_step");
  if (v.contains("max_line_search_evals"))
    o.max_line_search_evals =
        static_cast<int>(integer(v["max_line_search_evals"], "solver.max_line_search_evals"));
  if (v.contains("method")) {
    const std::string m = text(v["method"], "solver.method");
    if (m == "lbfgs") o.solver = SolverKind::lbfgs;
    else if (m == "cg") o.solver = SolverKind::conjugate_gradient;
    else fail("solver.method", "expected \"lbfgs\" or \"cg\"");
  }
  if (o.max_iters < 1) fail("solver.max_iters", "must be positive");
  if (o.grad_tol <= 0) fail("solver.grad_tol", "must be positive");
  if (o.cost_rel_tol < 0) fail("solver.cost_rel_tol", "must be nonnegative");
  if (o.memory < 1) fail("solver.memory", "must be positive");
  if (!(0 < o.wolfe_c1 && o.wolfe_c1 < o.wolfe_c2 && o.wolfe_c2 < 1))
    fail("solver", "Wolfe constants need 0 < c1 < c2 < 1");
  if (o.initial_step <= 0) fail("solver.initial_step", "must be positive");
  if (o.max_line_search_evals < 1) fail("solver.max_line_search_evals", "must be positive");
  return o;
}

}  // namespace

Model model_from_json(const Json& doc) {
  const std::string where = "model";
  expect_keys(doc, where,
              {"schema", "horizon", "order", "dims", "init_mean", "init_cov", "transitions",
               "observation", "process_noise", "obs_noise"});
  check_schema(doc, where);
  ModelData d;
  const std::int64_t T = integer(require(doc, "horizon", where), "model.horizon");
  const std::int64_t order = integer(require(doc, "order", where), "model.order");
  if (T < 1 || T > (1 << 24)) fail("model.horizon", "must lie in [1, 2^24]");
  if (order < 1 || order > T) fail("model.order", "must lie in [1, horizon]");
  const Json& dims = require(doc, "dims", where);
  expect_keys(dims, "model.dims", {"state", "obs"});
  const std::int64_t sd = integer(require(dims, "state", "model.dims"), "model.dims.state");
  const std::int64_t od = integer(require(dims, "obs", "model.dims"), "model.dims.obs");
  if (sd < 1 || od < 1 || sd > 4096 || od > 4096) fail("model.dims", "dimensions must lie in [1, 4096]");
  d.horizon = static_cast<int>(T);
  d.order = static_cast<int>(order);
  d.state_dim = static_cast<int>(sd);
  d.obs_dim = static_cast<int>(od);

  d.init_mean = vector(require(doc, "init_mean", where), d.state_dim, "model.init_mean");
  d.init_cov = matrix(require(doc, "init_cov", where), d.state_dim, d.state_dim, "model.init_cov");

  const Json& bank = require(doc, "transitions", where);
  if (!bank.is_array() || static_cast<int>(bank.size()) != d.horizon)
    fail("model.transitions", "expected one entry per t = 1..T");
  d.transitions = TransitionBank(d.horizon, d.order, d.state_dim);
  for (int t = 1; t <= d.horizon; ++t) {
    const Json& row = bank[t - 1];
    const std::string rw = item("model.transitions", t - 1);
    const int lags = d.transitions.lags(t);
    if (!row.is_array() || static_cast<int>(row.size()) != lags)
      fail(rw, "expected min(order, t) = " + std::to_string(lags) + " blocks");
    for (int s = 1; s <= lags; ++s)
      d.transitions.at(t, s) = matrix(row[s - 1], d.state_dim, d.state_dim, item(rw, s - 1));
  }

  const auto n = static_cast<std::size_t>(d.horizon) + 1;
  d.observation = matrix_list(require(doc, "observation", where), n, d.obs_dim, d.state_dim,
                              "model.observation");
  d.obs_noise = matrix_list(require(doc, "obs_noise", where), n, d.obs_dim, d.obs_dim, "model.obs_noise");
  std::vector<Matrix> q = matrix_list(require(doc, "process_noise", where), n - 1, d.state_dim,
                                      d.state_dim, "model.process_noise");
  d.process_noise.reserve(n);
  d.process_noise.push_back(Matrix::Zero(d.state_dim, d.state_dim));
  for (auto& m : q) d.process_noise.push_back(std::move(m));
  try {
    return Model(std::move(d));
  } catch (const ShapeError& e) {
    fail(where, e.what());
  }
}

Json model_to_json(const Model& model) {
  Json doc;
  doc["schema"] = kSchemaVersion;
  doc["horizon"] = model.horizon();
  doc["order"] = model.order();
  doc["dims"] = {{"state", model.state_dim()}, {"obs", model.obs_dim()}};
  doc["init_mean"] = Json::array();
  for (Eigen::Index i = 0; i < model.init_mean().size(); ++i) doc["init_mean"].push_back(model.init_mean()[i]);
  doc["init_cov"] = matrix_json(model.init_cov());
  Json bank = Json::array();
  for (int t = 1; t <= model.horizon(); ++t) {
    Json row = Json::array();
    for (int s = 1; s <= model.memory(t); ++s) row.push_back(matrix_json(model.A(t, s)));
    bank.push_back(std::move(row));
  }
  doc["transitions"] = std::move(bank);
  Json c = Json::array(), r = Json::array(), q = Json::array();
  for (int t = 0; t <= model.horizon(); ++t) {
    c.push_back(matrix_json(model.C(t)));
    r.push_back(matrix_json(model.R(t)));
    if (t >= 1) q.push_back(matrix_json(model.Q(t)));
  }
  doc["observation"] = std::move(c);
  doc["process_noise"] = std::move(q);
  doc["obs_noise"] = std::move(r);
  return doc;
}

std::string mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::predict: return "predict";
    case ExperimentMode::equivalence: return "equivalence";
    case ExperimentMode::duality: return "duality";
    case ExperimentMode::controls: return "controls";
    case ExperimentMode::scaling: return "scaling";
  }
  return "unknown";
}

std::optional<ExperimentMode> parse_mode(const std::string& name) {
  for (auto m : {ExperimentMode::predict, ExperimentMode::equivalence, ExperimentMode::duality,
                 ExperimentMode::controls, ExperimentMode::scaling})
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

std::vector<Method> canonical_methods(const std::vector<Method>& methods) {
  std::vector<Method> out;
  for (Method m : kAllMethods)
    if (std::find(methods.begin(), methods.end(), m) != methods.end()) out.push_back(m);
  return out;
}

std::vector<Method> parse_method_list(const std::string& text) {
  std::vector<Method> out;
  std::stringstream ss(text);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    const auto m = parse_method(name);
    if (!m) throw ConfigError("methods: unknown method \"" + name + "\"");
    out.push_back(*m);
  }
  if (out.empty()) throw ConfigError("methods: must not be empty");
  return canonical_methods(out);
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ExperimentConfig experiment_from_json(const Json& doc, const std::string& base_dir) {
  const std::string where = "config";
  expect_keys(doc, where,
              {"schema", "mode", "preset", "params", "model", "model_file", "horizons",
               "trajectories", "seed", "methods", "output_dir", "solver", "control_scales",
               "scaling", "equivalence_tol"});
  check_schema(doc, where);
  ExperimentConfig c;
  const auto mode = parse_mode(text(require(doc, "mode", where), "mode"));
  if (!mode) fail("mode", "expected one of predict, equivalence, duality, controls, scaling");
  c.mode = *mode;

  const int sources = static_cast<int>(doc.contains("preset")) + static_cast<int>(doc.contains("model")) +
                      static_cast<int>(doc.contains("model_file"));
  if (sources != 1) fail(where, "exactly one of \"preset\", \"model\", \"model_file\" is required");
  if (doc.contains("preset")) {
    const std::string name = text(doc["preset"], "preset");
    c.preset = parse_preset(name);
    if (!c.preset) fail("preset", "unknown preset \"" + name + "\"");
  } else if (doc.contains("model")) {
    c.model = model_from_json(doc["model"]);
  } else {
    const std::filesystem::path file = text(doc["model_file"], "model_file");
    const auto resolved = file.is_absolute() ? file : std::filesystem::path(base_dir) / file;
    c.model = model_from_json(read_json_file(resolved.string()));
  }
  if (doc.contains("params")) {
    if (!c.preset) fail("params", "only applies to presets");
    c.params = params_from_json(doc["params"], c.params);
  }

  c.horizons = horizons_from_json(require(doc, "horizons", where));
  if (c.model) {
    if (c.horizons.back() > c.model->horizon())
      fail("horizons", "exceed the horizon of the inline model");
  }
  if (c.mode == ExperimentMode::scaling) {
    if (!c.preset) fail("scaling", "the scaling sweep needs a preset");
    if (c.horizons.front() < 2) fail("horizons", "scaling horizons must be at least 2");
  }
  if (c.mode == ExperimentMode::controls || c.mode == ExperimentMode::duality) {
    if (c.horizons.front() < 1) fail("horizons", "must be at least 1 in this mode");
  }

  if (doc.contains("trajectories")) c.trajectories = integer(doc["trajectories"], "trajectories");
  if (c.trajectories < 1) fail("trajectories", "must be at least 1");
  if (c.mode == ExperimentMode::duality && c.trajectories < 2)
    fail("trajectories", "duality needs at least 2 samples");
  if (doc.contains("seed")) {
    const Json& s = doc["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      fail("seed", "expected a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("methods")) {
    const Json& m = doc["methods"];
    if (!m.is_array() || m.empty()) fail("methods", "expected a non-empty list");
    std::vector<Method> list;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string name = text(m[i], item("methods", i));
      const auto method = parse_method(name);
      if (!method) fail(item("methods", i), "unknown method \"" + name + "\"");
      list.push_back(*method);
    }
    c.methods = canonical_methods(list);
  }
  if (doc.contains("output_dir")) c.output_dir = text(doc["output_dir"], "output_dir");
  if (doc.contains("solver")) c.solver = solver_from_json(doc["solver"]);
  if (doc.contains("control_scales")) {
    const Json& s = doc["control_scales"];
    if (!s.is_array() || s.empty()) fail("control_scales", "expected a non-empty list");
    c.control_scales.clear();
    for (std::size_t i = 0; i < s.size(); ++i) c.control_scales.push_back(number(s[i], item("control_scales", i)));
  }
  if (doc.contains("scaling")) {
    const Json& s = doc["scaling"];
    expect_keys(s, "scaling", {"modes", "fixed_order", "memory_budget_bytes"});
    if (s.contains("modes")) {
      const Json& m = s["modes"];
      if (!m.is_array() || m.empty()) fail("scaling.modes", "expected a non-empty list");
      c.scaling_modes.clear();
      for (std::size_t i = 0; i < m.size(); ++i) {
        const auto mode_i = parse_order_mode(text(m[i], item("scaling.modes", i)));
        if (!mode_i) fail(item("scaling.modes", i), "expected \"fixed\" or \"full\"");
        if (std::find(c.scaling_modes.begin(), c.scaling_modes.end(), *mode_i) == c.scaling_modes.end())
          c.scaling_modes.push_back(*mode_i);
      }
    }
    if (s.contains("fixed_order")) c.fixed_order = static_cast<int>(integer(s["fixed_order"], "scaling.fixed_order"));
    if (s.contains("memory_budget_bytes"))
      c.memory_budget_bytes = integer(s["memory_budget_bytes"], "scaling.memory_budget_bytes");
    if (c.fixed_order < 1) fail("scaling.fixed_order", "must be positive");
    if (c.memory_budget_bytes < 0) fail("scaling.memory_budget_bytes", "must be nonnegative");
  }
  if (doc.contains("equivalence_tol")) c.equivalence_tol = number(doc["equivalence_tol"], "equivalence_tol");
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  const Json doc = read_json_file(path);
  return experiment_from_json(doc, std::filesystem::path(path).parent_path().string().empty()
                                       ? "."
                                       : std::filesystem::path(path).parent_path().string());
}

Json canonical_json(const ExperimentConfig& c) {
  Json doc;
  doc["schema"] = kSchemaVersion;
  doc["mode"] = mode_name(c.mode);
  if (c.preset) {
    doc["preset"] = preset_name(*c.preset);
    doc["params"] = {{"alpha", c.params.alpha},         {"dtheta", c.params.dtheta},
                     {"q", c.params.q},                 {"omega", c.params.omega},
                     {"init_mean", c.params.init_mean}, {"init_var", c.params.init_var},
                     {"process_var", c.params.process_var}, {"obs_var", c.params.obs_var}};
  } else if (c.model) {
    doc["model"] = model_to_json(*c.model);
  }
  doc["horizons"] = c.horizons;
  doc["trajectories"] = c.trajectories;
  doc["seed"] = c.seed;
  Json methods = Json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  doc["methods"] = methods;
  doc["solver"] = {{"max_iters", c.solver.max_iters},
                   {"grad_tol", c.solver.grad_tol},
                   {"cost_rel_tol", c.solver.cost_rel_tol},
                   {"memory", c.solver.memory},
                   {"wolfe_c1", c.solver.wolfe_c1},
                   {"wolfe_c2", c.solver.wolfe_c2},
                   {"initial_step", c.solver.initial_step},
                   {"max_line_search_evals", c.solver.max_line_search_evals},
                   {"method", c.solver.solver == SolverKind::lbfgs ? "lbfgs" : "cg"}};
  doc["control_scales"] = c.control_scales;
  Json modes = Json::array();
  for (OrderMode m : c.scaling_modes) modes.push_back(order_mode_name(m));
  doc["scaling"] = {{"modes", modes},
                    {"fixed_order", c.fixed_order},
                    {"memory_budget_bytes", c.memory_budget_bytes}};
  doc["equivalence_tol"] = c.equivalence_tol;
  return doc;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string s = canonical_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Model experiment_model(const ExperimentConfig& config, int horizon) {
  if (config.preset) return build_preset(*config.preset, horizon, config.params);
  return horizon == config.model->horizon() ? *config.model : truncate(*config.model, horizon);
}

}  // namespace dualfilter
