#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualfilter/config.hpp"

namespace dualfilter {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitIo = 4 };

/// Dual solve that did not converge, or a factorization that failed.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  std::string out_dir = ".";
  bool header_timestamp = true;
  std::ostream* log = nullptr;  // progress lines; nullptr for silence
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<std::string> files;  // artifacts left on disk
};

/// Runs one experiment and writes its CSV artifacts into options.out_dir.
///   predict:     predictions.csv, mse.csv
///   equivalence: equivalence.csv, mse.csv
///   duality:     duality.csv
///   controls:    controls.csv
///   scaling:     scaling.csv
/// On failure every artifact of this run is removed and the exit code says
/// why (2 config, 3 numerical, 4 I/O).
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Floats in artifacts: 17 significant digits, '.' decimal separator.
std::string format_double(double value);

}  // namespace dualfilter
