#include "dualfilter/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <utility>

namespace dualfilter {

namespace {

using Eigen::VectorXd;

struct Sample {
  double step;
  double value;
  double slope;
};

bool within_roundoff(double a, double b, double roundoff) {
  return std::abs(a - b) <= roundoff * std::max(std::abs(a), std::abs(b));
}

// Minimizer of the cubic matching value and slope at both ends; falls back
// to the secant step on the derivative when the values are too close to
// carry information.
double interpolate(const Sample& lo, const Sample& hi, double roundoff) {
  double trial = std::numeric_limits<double>::quiet_NaN();
  if (!within_roundoff(lo.value, hi.value, roundoff)) {
    const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.step - hi.step);
    const double disc = d1 * d1 - lo.slope * hi.slope;
    if (disc >= 0.0) {
      const double d2 = std::copysign(std::sqrt(disc), hi.step - lo.step);
      trial = hi.step - (hi.step - lo.step) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    }
  }
  if (!std::isfinite(trial) && hi.slope != lo.slope)
    trial = lo.step - lo.slope * (hi.step - lo.step) / (hi.slope - lo.slope);
  const double a = std::min(lo.step, hi.step);
  const double b = std::max(lo.step, hi.step);
  const double margin = 0.1 * (b - a);
  if (!std::isfinite(trial) || trial < a + margin || trial > b - margin) trial = 0.5 * (a + b);
  return trial;
}

}  // namespace

LineSearchResult strong_wolfe_search(
    const std::function<std::pair<double, double>(double)>& phi, double value0, double slope0,
    double initial_step, double c1, double c2, int max_evals, double roundoff) {
  LineSearchResult result;
  if (!(slope0 < 0.0)) return result;

  // Armijo in value form, or in derivative form once the value change is
  // below roundoff. For a quadratic the two are equivalent.
  auto sufficient = [&](const Sample& s) {
    if (within_roundoff(s.value, value0, roundoff)) return s.slope <= (2.0 * c1 - 1.0) * slope0;
    return s.value <= value0 + c1 * s.step * slope0;
  };
  auto curvature = [&](const Sample& s) { return std::abs(s.slope) <= -c2 * slope0; };
  auto accept = [&](const Sample& s) {
    result.step = s.step;
    result.value = s.value;
    result.slope = s.slope;
    result.ok = true;
    return result;
  };
  auto evaluate = [&](double step) {
    auto [v, g] = phi(step);
    ++result.evaluations;
    return Sample{step, v, g};
  };
  auto worse = [&](const Sample& a, const Sample& b) {
    return a.value >= b.value && !within_roundoff(a.value, b.value, roundoff);
  };

  auto zoom = [&](Sample lo, Sample hi) -> LineSearchResult {
    while (result.evaluations < max_evals) {
      if (std::abs(hi.step - lo.step) <= 1e-16 * std::max(1.0, std::abs(lo.step))) break;
      const Sample s = evaluate(interpolate(lo, hi, roundoff));
      if (!std::isfinite(s.value)) {
        hi = s;
        continue;
      }
      if (!sufficient(s) || worse(s, lo)) {
        hi = s;
      } else {
        if (curvature(s)) return accept(s);
        if (s.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = s;
      }
    }
    return result;
  };

  Sample prev{0.0, value0, slope0};
  double step = initial_step;
  for (int i = 0; result.evaluations < max_evals; ++i) {
    const Sample s = evaluate(step);
    if (!std::isfinite(s.value) || !sufficient(s) || (i > 0 && worse(s, prev)))
      return zoom(prev, s);
    if (curvature(s)) return accept(s);
    if (s.slope >= 0.0) return zoom(s, prev);
    prev = s;
    step *= 2.0;
    if (step > 1e10) break;
  }
  return result;
}

LbfgsResult lbfgs_minimize(const ObjectiveFn& objective, const PreconditionerFn& precondition,
                           const ConvergedFn& converged, VectorXd x0,
                           const LbfgsOptions& options) {
  struct Pair {
    VectorXd s;
    VectorXd y;
    double rho;
  };

  LbfgsResult out;
  out.x = std::move(x0);
  out.value = objective(out.x, out.grad);
  out.evaluations = 1;
  out.history.push_back(out.value);
  if (converged(out.grad)) {
    out.converged = true;
    out.stop_reason = "gradient tolerance";
    return out;
  }

  std::deque<Pair> memory;
  VectorXd trial_x;
  VectorXd trial_grad;
  bool restarted = false;

  while (out.iterations < options.max_iters) {
    // Two-loop recursion seeded with gamma * M^{-1}.
    VectorXd q = out.grad;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      alpha[i] = memory[i].rho * memory[i].s.dot(q);
      q.noalias() -= alpha[i] * memory[i].y;
    }
    VectorXd r = precondition(q);
    if (!memory.empty()) {
      const Pair& last = memory.back();
      r *= last.s.dot(last.y) / last.y.dot(precondition(last.y));
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const double beta = memory[i].rho * memory[i].y.dot(r);
      r.noalias() += (alpha[i] - beta) * memory[i].s;
    }
    VectorXd direction = -r;
    double slope = out.grad.dot(direction);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -precondition(out.grad);
      slope = out.grad.dot(direction);
    }

    auto phi = [&](double step) {
      trial_x = out.x + step * direction;
      const double v = objective(trial_x, trial_grad);
      return std::make_pair(v, trial_grad.dot(direction));
    };
    const LineSearchResult ls = strong_wolfe_search(phi, out.value, slope, options.initial_step,
                                                    options.c1, options.c2,
                                                    options.max_line_search_evals,
                                                    options.cost_roundoff);
    out.evaluations += ls.evaluations;
    if (!ls.ok) {
      if (!memory.empty() && !restarted) {
        memory.clear();
        restarted = true;
        continue;
      }
      out.stop_reason = "line search failed";
      return out;
    }
    restarted = false;
    // The accepted step is always the last one evaluated.
    VectorXd s = trial_x - out.x;
    VectorXd y = trial_grad - out.grad;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      memory.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }
    const double previous = out.value;
    out.x.swap(trial_x);
    out.grad.swap(trial_grad);
    out.value = ls.value;
    out.history.push_back(out.value);
    ++out.iterations;

    if (converged(out.grad)) {
      out.converged = true;
      out.stop_reason = "gradient tolerance";
      return out;
    }
    if (options.cost_rel_tol > 0.0 &&
        previous - out.value <= options.cost_rel_tol * std::max(std::abs(previous), 1e-300)) {
      out.converged = true;
      out.stop_reason = "relative cost decrease";
      return out;
    }
  }
  out.stop_reason = "iteration limit";
  return out;
}

}  // namespace dualfilter
