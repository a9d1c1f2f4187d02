#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualfilter/model.hpp"

namespace dualfilter {

/// Parameters shared by the three scalar benchmark systems.
struct PresetParams {
  double alpha = 0.1;                      // tracking rate
  double dtheta = 3.14159265358979323846 / 18.0;  // oscillation angle
  double q = 2.0;                          // fractional decay order
  double omega = 3.14159265358979323846 / 32.0;   // observation frequency
  double init_mean = 1.0;
  double init_var = 5e-3;
  double process_var = 5e-3;
  double obs_var = 1e-1;
};

enum class Preset { tracking, oscillating, fractional };

std::string preset_name(Preset preset);
std::optional<Preset> parse_preset(const std::string& name);
std::vector<std::string> preset_names();

/// Scalar model (d = m = 1) for the named system at horizon T.
///   tracking:    X_t = (1 - alpha) X_{t-1} + alpha X_0,  X_1 = alpha X_0,  C_t = 1, order T
///   oscillating: X_t = -2 cos(dtheta) X_{t-1} - X_{t-2}, X_1 = -cos(dtheta) X_0, C_t = 1, order 2
///   fractional:  X_t = sum_s X_{t-s} / (t - s + 1)^q,    C_t = (1 + 0.9 sin(omega t)) / 2, order T
Model build_preset(Preset preset, int horizon, const PresetParams& params = {});

/// Order used by each system when built at horizon T.
int preset_order(Preset preset, int horizon);

}  // namespace dualfilter
