#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualfilter {

/// Objective evaluated at x: returns f(x) and writes the gradient.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
/// Applies a fixed symmetric positive definite preconditioner M^{-1}.
using PreconditionerFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& g)>;
/// Convergence test on the current gradient; true stops the iteration.
using ConvergedFn = std::function<bool(const Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int max_iters = 500;
  int memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  double initial_step = 1.0;
  int max_line_search_evals = 40;
  /// Relative cost decrease below which iteration stops; 0 disables.
  double cost_rel_tol = 0.0;
  /// Relative size of cost changes treated as evaluation roundoff.
  double cost_roundoff = 1e-13;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> history;
};

/// Smallest relative size of cost changes treated as roundoff in an
/// evaluation of the objective.
inline constexpr double kCostRoundoff = 1e-13;

/// Preconditioned limited-memory BFGS. The two-loop recursion seeds its
/// inverse-Hessian approximation with gamma * M^{-1}; steps satisfy the
/// strong Wolfe conditions, or, once cost changes sink below roundoff, their
/// derivative-only form (sufficient decrease checked through phi'(alpha)).
LbfgsResult lbfgs_minimize(const ObjectiveFn& objective, const PreconditionerFn& precondition,
                           const ConvergedFn& converged, Eigen::VectorXd x0,
                           const LbfgsOptions& options);

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;
  int evaluations = 0;
  bool ok = false;
};

/// Strong Wolfe line search (bracketing then zoom with safeguarded cubic
/// interpolation). `phi` evaluates the objective along the ray and returns
/// (value, directional derivative).
LineSearchResult strong_wolfe_search(
    const std::function<std::pair<double, double>(double)>& phi, double value0, double slope0,
    double initial_step, double c1, double c2, int max_evals,
    double roundoff = kCostRoundoff);

}  // namespace dualfilter
