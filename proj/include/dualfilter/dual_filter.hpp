#pragma once

#include <string>
#include <vector>

#include "dualfilter/lbfgs.hpp"
#include "dualfilter/model.hpp"

namespace dualfilter {

/// Deterministic observation weights u_0..u_{T-1}, stored flat (time-major).
class ControlSequence {
 public:
  ControlSequence() = default;
  ControlSequence(int horizon, int obs_dim)
      : horizon_(horizon), obs_dim_(obs_dim), values_(Vector::Zero(static_cast<Eigen::Index>(horizon) * obs_dim)) {}
  ControlSequence(int horizon, int obs_dim, Vector values);

  static ControlSequence zeros(const Model& model) { return {model.horizon(), model.obs_dim()}; }

  int horizon() const { return horizon_; }
  int obs_dim() const { return obs_dim_; }

  auto at(int t) { return values_.segment(static_cast<Eigen::Index>(t) * obs_dim_, obs_dim_); }
  auto at(int t) const { return values_.segment(static_cast<Eigen::Index>(t) * obs_dim_, obs_dim_); }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

 private:
  int horizon_ = 0;
  int obs_dim_ = 0;
  Vector values_;
};

/// Dual states y_0..y_T and momenta p_0..p_T for one terminal vector f.
struct DualTrajectory {
  VectorSeq dual_states;
  VectorSeq momenta;
  Vector terminal;
};

enum class SolverKind { lbfgs, conjugate_gradient };

struct SolveOptions {
  int max_iters = 500;
  /// Stop once ||u + R^{-1} C p||_inf <= grad_tol * max(1, ||f||).
  double grad_tol = 1e-10;
  /// Optional stop on relative cost decrease between accepted iterates;
  /// 0 disables it.
  double cost_rel_tol = 0.0;
  int memory = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double initial_step = 1.0;
  int max_line_search_evals = 40;
  SolverKind solver = SolverKind::lbfgs;
};

struct SolveReport {
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;  // preconditioned, infinity norm
  double cost = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> cost_history;  // entry 0 is the cost at u = 0
  double cost_roundoff = 0.0;        // relative roundoff assumed for cost values
};

/// Dual state recursion run backward from y_T = f:
///   y_t = sum_{s=1}^{min(tau, T-t)} A_{t+s,s}^T y_{t+s} + C_t^T u_t.
VectorSeq backward_pass(const Model& model, const ControlSequence& u, const Vector& f,
                        OpCounter* counter = nullptr);

/// Momentum recursion run forward from p_0 = Sigma0 y_0:
///   p_t = sum_{s=1}^{min(tau, t)} A_{t,s} p_{t-s} + Q_t y_t.
VectorSeq forward_pass(const Model& model, const VectorSeq& dual_states,
                       OpCounter* counter = nullptr);

struct ControlGradient {
  /// u_t + R_t^{-1} C_t p_t, the residual used as the descent direction.
  ControlSequence preconditioned;
  /// R_t u_t + C_t p_t, the exact gradient of the dual cost.
  ControlSequence raw;
};

ControlGradient control_gradient(const Model& model, const ControlSequence& u,
                                 const VectorSeq& momenta, OpCounter* counter = nullptr);

/// 1/2 |y_0|^2_{Sigma0} + sum 1/2 |y_t|^2_{Q_t} + sum 1/2 |u_t|^2_{R_t}.
double dual_cost(const Model& model, const ControlSequence& u, const Vector& f,
                 OpCounter* counter = nullptr);
double dual_cost(const Model& model, const ControlSequence& u, const VectorSeq& dual_states,
                 OpCounter* counter = nullptr);

struct DualSolution {
  ControlSequence control;
  DualTrajectory trajectory;
  SolveReport report;
};

/// Minimizes the dual cost over u starting from u = 0.
DualSolution solve_dual_control(const Model& model, const Vector& f,
                                const SolveOptions& options = {},
                                OpCounter* counter = nullptr);

struct Prediction {
  Vector z_hat;
  std::vector<ControlSequence> controls;  // one per row of C_T
  VectorSeq initial_duals;                // y_0 per row of C_T
  std::vector<SolveReport> reports;
  bool converged = true;
};

/// Solved controls for every row of C_T. Controls do not depend on the
/// observations, so one predictor serves any number of trajectories.
class DualPredictor {
 public:
  DualPredictor(const Model& model, const SolveOptions& options = {},
                OpCounter* counter = nullptr);

  /// Zhat_j = y0_j^T mu0 - sum_t u_{j,t}^T Z_t for each row j of C_T.
  Vector predict(const VectorSeq& observations) const;

  const std::vector<DualSolution>& solutions() const { return solutions_; }
  bool converged() const;

 private:
  Vector init_mean_;
  std::vector<DualSolution> solutions_;
};

/// Next-step prediction Zhat_{T|T-1} from Z_0..Z_{T-1}.
Prediction predict_next(const Model& model, const VectorSeq& observations,
                        const SolveOptions& options = {}, OpCounter* counter = nullptr);

/// Relative roundoff of one dual cost evaluation: the cost accumulates
/// O(T) terms, so the floor kCostRoundoff grows as 4 eps (T + 1).
double cost_roundoff(const Model& model);

/// Whether a recorded cost history is non-increasing up to a relative
/// roundoff of the cost evaluation itself.
bool cost_history_monotone(const std::vector<double>& history, double roundoff = kCostRoundoff);

}  // namespace dualfilter
