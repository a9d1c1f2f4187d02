// dualfilter command-line front end.
//
//   dualfilter validate <config>
//   dualfilter run <config> [--seed N] [--out-dir DIR] [--methods a,b] [--no-header-timestamp] [--jobs N]
//   dualfilter preset list
//   dualfilter preset show <name> --horizon T
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "dualfilter/config.hpp"
#include "dualfilter/experiment.hpp"

using namespace dualfilter;

namespace {

constexpr const char* kOutDirEnv = "DUALFILTER_OUT_DIR";

int validate_file(const std::string& path) {
  const Json doc = read_json_file(path);
  std::vector<Violation> violations;
  if (doc.is_object() && doc.contains("transitions")) {
    violations = validate_model(model_from_json(doc));
  } else {
    const ExperimentConfig config = load_experiment(path);
    const int t_max = std::max(1, config.horizons.back());
    violations = validate_model(experiment_model(config, t_max));
    std::cout << "config " << mode_name(config.mode) << " hash " << config_hash(config) << "\n";
  }
  for (const auto& v : violations) std::cout << "violation: " << v.message() << "\n";
  if (!violations.empty()) return kExitConfig;
  std::cout << "ok\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Next-step prediction for non-Markovian linear Gaussian models"};
  app.require_subcommand(1);

  std::string config_path;
  auto* validate = app.add_subcommand("validate", "Check a model or experiment config");
  validate->add_option("config", config_path, "JSON file")->required();

  std::uint64_t seed = 0;
  std::string out_dir;
  std::string methods;
  bool no_timestamp = false;
  int jobs = 0;
  auto* run = app.add_subcommand("run", "Run an experiment config and write CSV artifacts");
  run->add_option("config", config_path, "JSON file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out-dir", out_dir,
                  std::string("Output directory (default: config, then $") + kOutDirEnv + ", then .)");
  run->add_option("--methods", methods, "Comma list of kalman,smoothing,wiener-hopf,dual");
  run->add_flag("--no-header-timestamp", no_timestamp, "Omit the generated-at line in CSV files");
  run->add_option("--jobs", jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

  auto* preset = app.add_subcommand("preset", "Inspect built-in models");
  preset->require_subcommand(1);
  preset->add_subcommand("list", "List preset names");
  std::string preset_arg;
  int horizon = 0;
  auto* show = preset->add_subcommand("show", "Print a preset as a model document");
  show->add_option("name", preset_arg, "Preset name")->required();
  show->add_option("--horizon", horizon, "Horizon T")->required()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*validate) return validate_file(config_path);

    if (preset->got_subcommand("list")) {
      for (const auto& name : preset_names()) std::cout << name << "\n";
      return kExitOk;
    }
    if (*show) {
      const auto p = parse_preset(preset_arg);
      if (!p) {
        std::cerr << "error: unknown preset \"" << preset_arg << "\"\n";
        return kExitConfig;
      }
      std::cout << model_to_json(build_preset(*p, horizon)).dump(2) << "\n";
      return kExitOk;
    }

    ExperimentConfig config = load_experiment(config_path);
    if (*seed_opt) config.seed = seed;
    if (!methods.empty()) config.methods = parse_method_list(methods);
    if (jobs > 0) omp_set_num_threads(jobs);

    RunOptions options;
    options.header_timestamp = !no_timestamp;
    options.log = &std::cerr;
    if (!out_dir.empty()) {
      options.out_dir = out_dir;
    } else if (!config.output_dir.empty()) {
      options.out_dir = config.output_dir;
    } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
      options.out_dir = env;
    }

    const RunResult result = run_experiment(config, options);
    if (result.exit_code != kExitOk) {
      std::cerr << "error: " << result.message << "\n";
      return result.exit_code;
    }
    for (const auto& f : result.files) std::cout << f << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
