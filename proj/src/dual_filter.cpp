#include "dualfilter/dual_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "dualfilter/lbfgs.hpp"
#include "kernels.hpp"
#include "dualfilter/op_counter.hpp"

namespace dualfilter {

ControlSequence::ControlSequence(int horizon, int obs_dim, Vector values)
    : horizon_(horizon), obs_dim_(obs_dim), values_(std::move(values)) {
  if (values_.size() != static_cast<Eigen::Index>(horizon) * obs_dim)
    throw ShapeError("control values have wrong length");
}

namespace {

void expect_control(const Model& model, const ControlSequence& u) {
  if (u.horizon() != model.horizon() || u.obs_dim() != model.obs_dim())
    throw ShapeError("control sequence does not match the model horizon");
}

// R_t^{-1} applied blockwise.
class NoiseSolver {
 public:
  explicit NoiseSolver(const Model& model) : obs_dim_(model.obs_dim()) {
    factors_.reserve(model.horizon());
    for (int t = 0; t < model.horizon(); ++t) {
      factors_.emplace_back(model.R(t));
      if (factors_.back().info() != Eigen::Success)
        throw InvalidModelError("R_" + std::to_string(t) + " is not positive definite");
    }
  }

  Vector solve(const Vector& stacked, OpCounter* counter) const {
    Vector out(stacked.size());
    const auto m = static_cast<Eigen::Index>(obs_dim_);
    for (std::size_t t = 0; t < factors_.size(); ++t) {
      const auto off = static_cast<Eigen::Index>(t) * m;
      out.segment(off, m) = factors_[t].solve(stacked.segment(off, m));
    }
    charge(counter, [&](OpCounter& c) {
      c.triangular_solve(m, 2 * static_cast<std::int64_t>(factors_.size()));
    });
    return out;
  }

  void charge_factorization(OpCounter* counter) const {
    charge(counter, [&](OpCounter& c) {
      for (std::size_t t = 0; t < factors_.size(); ++t) c.cholesky(obs_dim_);
    });
  }

 private:
  int obs_dim_;
  std::vector<Eigen::LLT<Matrix>> factors_;
};

struct Evaluation {
  VectorSeq y;
  VectorSeq p;
  double cost = 0.0;
  ControlSequence raw_grad;
};

Evaluation evaluate(const Model& model, const ControlSequence& u, const Vector& f,
                    OpCounter* counter) {
  Evaluation e;
  e.y = backward_pass(model, u, f, counter);
  e.p = forward_pass(model, e.y, counter);
  e.cost = dual_cost(model, u, e.y, counter);
  e.raw_grad = ControlSequence(model.horizon(), model.obs_dim());
  for (int t = 0; t < model.horizon(); ++t)
    e.raw_grad.at(t).noalias() = model.R(t) * u.at(t) + model.C(t) * e.p[t];
  charge(counter, [&](OpCounter& c) {
    const std::int64_t T = model.horizon();
    c.gemv(T * model.obs_dim(), model.obs_dim() + model.state_dim());
  });
  return e;
}

DualTrajectory make_trajectory(const Model& model, const ControlSequence& u, const Vector& f,
                               OpCounter* counter) {
  DualTrajectory traj;
  traj.dual_states = backward_pass(model, u, f, counter);
  traj.momenta = forward_pass(model, traj.dual_states, counter);
  traj.terminal = f;
  return traj;
}

double gradient_scale(const Vector& f) { return std::max(1.0, f.norm()); }

DualSolution solve_lbfgs(const Model& model, const Vector& f, const SolveOptions& options,
                         const NoiseSolver& noise, OpCounter* counter) {
  const int T = model.horizon();
  const int m = model.obs_dim();
  const double tol = options.grad_tol * gradient_scale(f);
  std::int64_t vector_ops = 0;

  auto objective = [&](const Vector& x, Vector& grad) {
    Evaluation e = evaluate(model, ControlSequence(T, m, x), f, counter);
    grad = std::move(e.raw_grad.values());
    vector_ops += grad.size();  // directional derivative
    return e.cost;
  };
  auto precondition = [&](const Vector& g) {
    vector_ops += g.size();
    return noise.solve(g, counter);
  };
  auto converged = [&](const Vector& g) {
    return noise.solve(g, counter).lpNorm<Eigen::Infinity>() <= tol;
  };

  LbfgsOptions lo;
  lo.max_iters = options.max_iters;
  lo.memory = options.memory;
  lo.c1 = options.wolfe_c1;
  lo.c2 = options.wolfe_c2;
  lo.initial_step = options.initial_step;
  lo.max_line_search_evals = options.max_line_search_evals;
  lo.cost_rel_tol = options.cost_rel_tol;
  lo.cost_roundoff = cost_roundoff(model);
  LbfgsResult r = lbfgs_minimize(objective, precondition, converged,
                                 Vector::Zero(static_cast<Eigen::Index>(T) * m), lo);
  // Two-loop recursion: 4 vector operations per stored pair plus the update.
  vector_ops += static_cast<std::int64_t>(r.iterations) *
                (4LL * options.memory + 2) * static_cast<std::int64_t>(T) * m;
  charge(counter, [&](OpCounter& c) { c.axpy(vector_ops); });

  DualSolution sol;
  sol.control = ControlSequence(T, m, std::move(r.x));
  sol.report.iterations = r.iterations;
  sol.report.evaluations = r.evaluations;
  sol.report.cost = r.value;
  sol.report.converged = r.converged;
  sol.report.stop_reason = r.stop_reason;
  sol.report.cost_history = std::move(r.history);
  sol.report.cost_roundoff = lo.cost_roundoff;
  sol.report.grad_norm = noise.solve(r.grad, nullptr).lpNorm<Eigen::Infinity>();
  return sol;
}

// Preconditioned conjugate gradients on the normal equations H u = -b,
// where H v is the raw gradient of the cost at v with f = 0.
DualSolution solve_cg(const Model& model, const Vector& f, const SolveOptions& options,
                      const NoiseSolver& noise, OpCounter* counter) {
  const int T = model.horizon();
  const int m = model.obs_dim();
  const Vector zero_f = Vector::Zero(model.state_dim());
  const double tol = options.grad_tol * gradient_scale(f);
  const auto n = static_cast<Eigen::Index>(T) * m;

  DualSolution sol;
  ControlSequence u(T, m);
  Evaluation e0 = evaluate(model, u, f, counter);
  sol.report.cost_history.push_back(e0.cost);
  sol.report.evaluations = 1;
  Vector residual = -e0.raw_grad.values();
  Vector z = noise.solve(residual, counter);
  Vector direction = z;
  double rz = residual.dot(z);
  double grad_norm = z.lpNorm<Eigen::Infinity>();
  std::int64_t vector_ops = 0;

  while (grad_norm > tol && sol.report.iterations < options.max_iters) {
    const Vector hd =
        evaluate(model, ControlSequence(T, m, direction), zero_f, counter).raw_grad.values();
    ++sol.report.evaluations;
    const double curvature = direction.dot(hd);
    if (!(curvature > 0.0)) {
      sol.report.stop_reason = "non-positive curvature";
      break;
    }
    const double step = rz / curvature;
    u.values().noalias() += step * direction;
    residual.noalias() -= step * hd;
    z = noise.solve(residual, counter);
    const double rz_next = residual.dot(z);
    direction = z + (rz_next / rz) * direction;
    rz = rz_next;
    grad_norm = z.lpNorm<Eigen::Infinity>();
    vector_ops += 6 * n;
    ++sol.report.iterations;
    sol.report.cost_history.push_back(dual_cost(model, u, f, counter));
  }
  charge(counter, [&](OpCounter& c) { c.axpy(vector_ops); });

  sol.report.converged = grad_norm <= tol;
  if (sol.report.stop_reason.empty())
    sol.report.stop_reason = sol.report.converged ? "gradient tolerance" : "iteration limit";
  sol.report.cost = sol.report.cost_history.back();
  sol.report.cost_roundoff = cost_roundoff(model);
  sol.report.grad_norm = grad_norm;
  sol.control = std::move(u);
  return sol;
}

}  // namespace

VectorSeq backward_pass(const Model& model, const ControlSequence& u, const Vector& f,
                        OpCounter* counter) {
  expect_control(model, u);
  const int T = model.horizon();
  if (f.size() != model.state_dim()) throw ShapeError("terminal vector has wrong length");
  Matrix y(model.state_dim(), T + 1);
  y.col(T) = f;
  for (int t = T - 1; t >= 0; --t) {
    y.col(t).noalias() = model.C(t).transpose() * u.at(t);
    detail::anticausal_sum(model.bank(), t, T, y, y.col(t).data());
  }
  charge(counter, [&](OpCounter& c) {
    const std::int64_t d = model.state_dim();
    c.gemv(model.transition_blocks() * d, d);
    c.gemv(static_cast<std::int64_t>(T) * d, model.obs_dim());
  });
  return detail::columns_to_seq(y);
}

VectorSeq forward_pass(const Model& model, const VectorSeq& dual_states, OpCounter* counter) {
  const int T = model.horizon();
  if (static_cast<int>(dual_states.size()) != T + 1)
    throw ShapeError("dual states must cover t = 0..T");
  Matrix p(model.state_dim(), T + 1);
  p.col(0).noalias() = model.init_cov() * dual_states[0];
  for (int t = 1; t <= T; ++t) {
    p.col(t).noalias() = model.Q(t) * dual_states[t];
    detail::causal_sum(model.bank(), t, p, p.col(t).data());
  }
  charge(counter, [&](OpCounter& c) {
    const std::int64_t d = model.state_dim();
    c.gemv(model.transition_blocks() * d, d);
    c.gemv((T + 1LL) * d, d);
  });
  return detail::columns_to_seq(p);
}

ControlGradient control_gradient(const Model& model, const ControlSequence& u,
                                 const VectorSeq& momenta, OpCounter* counter) {
  expect_control(model, u);
  if (static_cast<int>(momenta.size()) != model.horizon() + 1)
    throw ShapeError("momenta must cover t = 0..T");
  const int T = model.horizon();
  ControlGradient g{ControlSequence(T, model.obs_dim()), ControlSequence(T, model.obs_dim())};
  for (int t = 0; t < T; ++t) {
    const Vector cp = model.C(t) * momenta[t];
    g.raw.at(t).noalias() = model.R(t) * u.at(t) + cp;
    g.preconditioned.at(t) = u.at(t) + model.R(t).llt().solve(cp);
  }
  charge(counter, [&](OpCounter& c) {
    const std::int64_t m = model.obs_dim();
    c.gemv(T * m, model.state_dim() + m);
    for (int t = 0; t < T; ++t) c.cholesky(m);
    c.triangular_solve(m, 2LL * T);
  });
  return g;
}

double dual_cost(const Model& model, const ControlSequence& u, const VectorSeq& dual_states,
                 OpCounter* counter) {
  expect_control(model, u);
  const int T = model.horizon();
  double cost = dual_states[0].dot(model.init_cov() * dual_states[0]);
  for (int t = 1; t <= T; ++t) cost += dual_states[t].dot(model.Q(t) * dual_states[t]);
  for (int t = 0; t < T; ++t) cost += u.at(t).dot(model.R(t) * u.at(t));
  charge(counter, [&](OpCounter& c) {
    const std::int64_t d = model.state_dim();
    const std::int64_t m = model.obs_dim();
    c.gemv((T + 1LL) * d, d + 1);
    c.gemv(T * m, m + 1);
  });
  return 0.5 * cost;
}

double dual_cost(const Model& model, const ControlSequence& u, const Vector& f,
                 OpCounter* counter) {
  return dual_cost(model, u, backward_pass(model, u, f, counter), counter);
}

DualSolution solve_dual_control(const Model& model, const Vector& f, const SolveOptions& options,
                                OpCounter* counter) {
  if (f.size() != model.state_dim()) throw ShapeError("terminal vector has wrong length");
  const NoiseSolver noise(model);
  noise.charge_factorization(counter);
  DualSolution sol = options.solver == SolverKind::lbfgs
                         ? solve_lbfgs(model, f, options, noise, counter)
                         : solve_cg(model, f, options, noise, counter);
  sol.trajectory = make_trajectory(model, sol.control, f, counter);
  charge(counter, [&](OpCounter& c) {
    const std::int64_t T = model.horizon();
    const std::int64_t d = model.state_dim();
    const std::int64_t m = model.obs_dim();
    // y, p, u, gradient and the quasi-Newton pairs.
    c.note_memory(2 * (T + 1) * d + (2LL * options.memory + 4) * T * m);
  });
  return sol;
}

DualPredictor::DualPredictor(const Model& model, const SolveOptions& options, OpCounter* counter)
    : init_mean_(model.init_mean()) {
  const Matrix& last = model.C(model.horizon());
  solutions_.reserve(last.rows());
  for (Eigen::Index j = 0; j < last.rows(); ++j)
    solutions_.push_back(solve_dual_control(model, last.row(j).transpose(), options, counter));
}

Vector DualPredictor::predict(const VectorSeq& observations) const {
  Vector z(static_cast<Eigen::Index>(solutions_.size()));
  for (std::size_t j = 0; j < solutions_.size(); ++j) {
    const DualSolution& sol = solutions_[j];
    const int T = sol.control.horizon();
    if (static_cast<int>(observations.size()) < T)
      throw ShapeError("prediction needs observations Z_0..Z_{T-1}");
    double value = sol.trajectory.dual_states[0].dot(init_mean_);
    for (int t = 0; t < T; ++t) value -= sol.control.at(t).dot(observations[t]);
    z[static_cast<Eigen::Index>(j)] = value;
  }
  return z;
}

bool DualPredictor::converged() const {
  for (const auto& s : solutions_)
    if (!s.report.converged) return false;
  return true;
}

Prediction predict_next(const Model& model, const VectorSeq& observations,
                        const SolveOptions& options, OpCounter* counter) {
  if (static_cast<int>(observations.size()) != model.horizon())
    throw ShapeError("prediction needs exactly T observations");
  const DualPredictor predictor(model, options, counter);
  Prediction out;
  out.z_hat = predictor.predict(observations);
  charge(counter, [&](OpCounter& c) {
    c.dot(static_cast<std::int64_t>(model.horizon()) * model.obs_dim() * model.obs_dim());
  });
  for (const auto& s : predictor.solutions()) {
    out.controls.push_back(s.control);
    out.initial_duals.push_back(s.trajectory.dual_states[0]);
    out.reports.push_back(s.report);
    out.converged = out.converged && s.report.converged;
  }
  return out;
}

double cost_roundoff(const Model& model) {
  return std::max(kCostRoundoff, 4.0 * std::numeric_limits<double>::epsilon() * (model.horizon() + 1));
}

bool cost_history_monotone(const std::vector<double>& history, double roundoff) {
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (history[k] > history[k - 1] + roundoff * std::abs(history[k - 1])) return false;
  }
  return true;
}

}  // namespace dualfilter
