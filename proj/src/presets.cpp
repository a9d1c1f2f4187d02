#include "dualfilter/presets.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace dualfilter {

std::string preset_name(Preset preset) {
  switch (preset) {
    case Preset::tracking: return "tracking";
    case Preset::oscillating: return "oscillating";
    case Preset::fractional: return "fractional";
  }
  return "unknown";
}

std::optional<Preset> parse_preset(const std::string& name) {
  for (Preset p : {Preset::tracking, Preset::oscillating, Preset::fractional})
    if (preset_name(p) == name) return p;
  return std::nullopt;
}

std::vector<std::string> preset_names() { return {"tracking", "oscillating", "fractional"}; }

int preset_order(Preset preset, int horizon) {
  return preset == Preset::oscillating ? std::min(2, horizon) : horizon;
}

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

Model build_preset(Preset preset, int horizon, const PresetParams& params) {
  if (horizon < 1) throw ShapeError("preset horizon must be at least 1");
  ModelData d;
  d.horizon = horizon;
  d.order = preset_order(preset, horizon);
  d.state_dim = 1;
  d.obs_dim = 1;
  d.transitions = TransitionBank(horizon, d.order, 1);
  d.observation.resize(horizon + 1);
  d.process_noise.resize(horizon + 1);
  d.obs_noise.resize(horizon + 1);

  for (int t = 1; t <= horizon; ++t) {
    auto a = [&](int s) -> double& { return *d.transitions.data(t, s); };
    switch (preset) {
      case Preset::tracking:
        // Lag t reaches X_0; at t = 1 both terms coincide on the same lag.
        if (t == 1) {
          a(1) = params.alpha;
        } else {
          a(1) = 1.0 - params.alpha;
          a(t) = params.alpha;
        }
        break;
      case Preset::oscillating:
        if (t == 1) {
          a(1) = -std::cos(params.dtheta);
        } else {
          a(1) = -2.0 * std::cos(params.dtheta);
          a(2) = -1.0;
        }
        break;
      case Preset::fractional:
        for (int s = 1; s <= t; ++s) a(s) = 1.0 / std::pow(t - s + 1.0, params.q);
        break;
    }
    d.process_noise[t] = scalar(params.process_var);
  }
  for (int t = 0; t <= horizon; ++t) {
    d.observation[t] = preset == Preset::fractional
                           ? scalar(0.5 * (1.0 + 0.9 * std::sin(params.omega * t)))
                           : scalar(1.0);
    d.obs_noise[t] = scalar(params.obs_var);
  }
  d.process_noise[0] = scalar(0.0);
  d.init_mean = Vector::Constant(1, params.init_mean);
  d.init_cov = scalar(params.init_var);
  return Model(std::move(d));
}

}  // namespace dualfilter
