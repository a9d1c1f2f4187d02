#include "dualfilter/baselines.hpp"

#include <utility>

#include "dualfilter/op_counter.hpp"

namespace dualfilter {

namespace {

Eigen::Index idx(std::int64_t i) { return static_cast<Eigen::Index>(i); }

void expect_observations(const Model& model, const VectorSeq& observations) {
  if (static_cast<int>(observations.size()) < model.horizon())
    throw ShapeError("prediction needs observations Z_0..Z_{T-1}");
  for (int t = 0; t < model.horizon(); ++t)
    if (observations[t].size() != model.obs_dim()) throw ShapeError("observation has wrong length");
}

// Stacked A * M for a Td x k matrix M whose block rows are times 0..T-1.
Matrix apply_transition_rows(const Model& model, const Matrix& rows, OpCounter* counter) {
  const int T = model.horizon();
  const int d = model.state_dim();
  Matrix out = Matrix::Zero(rows.rows(), rows.cols());
  for (int t = 1; t <= T; ++t) {
    auto dst = out.middleRows(idx(t - 1) * d, d);
    for (int s = 1; s <= model.memory(t); ++s)
      dst.noalias() += model.A(t, s) * rows.middleRows(idx(t - s) * d, d);
  }
  charge(counter, [&](OpCounter& c) { c.gemm(model.transition_blocks() * d, d, rows.cols()); });
  return out;
}

Vector centered_observations(const VectorSeq& observations, const JointMoments& moments, int T) {
  VectorSeq centered(T);
  for (int t = 0; t < T; ++t) centered[t] = observations[t] - moments.obs_means[t];
  return stack(centered);
}

ProjectionWeights make_weights(const Model& model, WeightKind kind) {
  ProjectionWeights w;
  w.kind = kind;
  w.horizon = model.horizon();
  w.state_dim = model.state_dim();
  w.obs_dim = model.obs_dim();
  return w;
}

// b = A Xbar - W Zbar.
void set_bias(const Model& model, const JointMoments& moments, ProjectionWeights& w,
              OpCounter* counter) {
  w.bias = stack(apply_transition_stacked(model, moments.state_means, counter)) -
           w.weights * stack(moments.obs_means);
  charge(counter, [&](OpCounter& c) { c.gemv(w.weights.rows(), w.weights.cols()); });
}

}  // namespace

GrowingKalman::GrowingKalman(const Model& model, OpCounter* counter)
    : model_(&model), counter_(counter), estimate_(model.init_mean()), covariance_(model.init_cov()) {}

void GrowingKalman::correct(const Vector& observation) {
  if (phase_ != Phase::predicted) throw std::logic_error("correction requires a predicted state");
  const int d = model_->state_dim();
  const int m = model_->obs_dim();
  const Eigen::Index n = covariance_.rows();
  const Matrix& C = model_->C(time_);

  // P Ct^T only touches the last block column since Ct = [0 C_t].
  const Matrix pc = covariance_.rightCols(d) * C.transpose();
  const Matrix innovation_cov = C * pc.bottomRows(d) + model_->R(time_);
  const Eigen::LLT<Matrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success)
    throw InvalidModelError("innovation covariance is singular at t = " + std::to_string(time_));
  const Matrix gain = llt.solve(pc.transpose()).transpose();
  const Vector innovation = observation - C * estimate_.tail(d);
  estimate_.noalias() += gain * innovation;
  // (I - L Ct) P = P - L (P Ct^T)^T
  covariance_.noalias() -= gain * pc.transpose();
  covariance_ = (0.5 * (covariance_ + covariance_.transpose())).eval();
  phase_ = Phase::corrected;

  charge(counter_, [&](OpCounter& c) {
    c.gemm(n, d, m);
    c.gemm(m, d, m);
    c.cholesky(m);
    c.triangular_solve(m, 2 * n);
    c.gemv(m, d);
    c.gemv(n, m);
    c.gemm(n, m, n);
  });
}

void GrowingKalman::transition() {
  if (phase_ != Phase::corrected) throw std::logic_error("transition requires a corrected state");
  if (time_ >= model_->horizon()) throw std::logic_error("transition past the horizon");
  const int d = model_->state_dim();
  const int next = time_ + 1;
  const Eigen::Index n = covariance_.rows();

  // Padded row [0 A_{t+1,tau} ... A_{t+1,1}] applied on the left.
  Matrix row = Matrix::Zero(d, n);
  Vector mean = Vector::Zero(d);
  for (int s = 1; s <= model_->memory(next); ++s) {
    const Eigen::Index off = idx(next - s) * d;
    row.noalias() += model_->A(next, s) * covariance_.middleRows(off, d);
    mean.noalias() += model_->A(next, s) * estimate_.segment(off, d);
  }
  Matrix diag = model_->Q(next);
  for (int s = 1; s <= model_->memory(next); ++s)
    diag.noalias() += row.middleCols(idx(next - s) * d, d) * model_->A(next, s).transpose();

  Matrix grown(n + d, n + d);
  grown.topLeftCorner(n, n) = covariance_;
  grown.bottomLeftCorner(d, n) = row;
  grown.topRightCorner(n, d) = row.transpose();
  grown.bottomRightCorner(d, d) = 0.5 * (diag + diag.transpose());
  covariance_ = std::move(grown);
  estimate_.conservativeResize(n + d);
  estimate_.tail(d) = mean;
  time_ = next;
  phase_ = Phase::predicted;

  charge(counter_, [&](OpCounter& c) {
    const std::int64_t lags = model_->memory(next);
    c.gemm(lags * d, d, n);
    c.gemm(lags * d, d, d);
    c.gemv(lags * d, d);
    c.note_memory((n + d) * (n + d) + (n + d) * (1 + model_->obs_dim()));
  });
}

KalmanPrediction kalman_growing_predict(const Model& model, const VectorSeq& observations,
                                        OpCounter* counter) {
  expect_observations(model, observations);
  GrowingKalman filter(model, counter);
  for (int t = 0; t < model.horizon(); ++t) {
    filter.correct(observations[t]);
    filter.transition();
  }
  KalmanPrediction out;
  out.x_hat = filter.current();
  out.z_hat = model.C(model.horizon()) * out.x_hat;
  return out;
}

Matrix block_cholesky(const Matrix& sigma, int block_size, OpCounter* counter) {
  const Eigen::Index n = sigma.rows();
  if (sigma.cols() != n || block_size < 1 || n % block_size != 0)
    throw ShapeError("block Cholesky needs a square matrix of whole blocks");
  const Eigen::Index b = block_size;
  const Eigen::Index blocks = n / b;
  Matrix D = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < blocks; ++j) {
    const Eigen::Index c = j * b;
    const auto done = D.block(c, 0, b, c);  // D_{j,<j}
    Matrix pivot = sigma.block(c, c, b, b);
    pivot.noalias() -= done * done.transpose();
    const Eigen::LLT<Matrix> llt(pivot);
    if (llt.info() != Eigen::Success)
      throw FactorizationError("block row " + std::to_string(j) + " is not positive definite",
                               static_cast<int>(j));
    const Matrix L = llt.matrixL();
    D.block(c, c, b, b) = L;
    const Eigen::Index below = n - c - b;
    if (below == 0) continue;
    Matrix panel = sigma.block(c + b, c, below, b);
    panel.noalias() -= D.block(c + b, 0, below, c) * done.transpose();
    // panel * L^{-T}
    D.block(c + b, c, below, b) =
        L.triangularView<Eigen::Lower>().solve(panel.transpose()).transpose();
  }
  charge(counter, [&](OpCounter& c) {
    c.cholesky(n);
    c.note_memory(n * n);
  });
  return D;
}

VectorSeq ProjectionWeights::apply(const VectorSeq& observations) const {
  const Vector z = stack(VectorSeq(observations.begin(), observations.begin() + horizon));
  return unstack(weights * z + bias, horizon);
}

ProjectionWeights batch_smoothing_weights(const Model& model, const JointMoments& moments,
                                          OpCounter* counter) {
  const int T = model.horizon();
  const Eigen::Index nx = idx(T) * model.state_dim();
  const Eigen::Index nz = idx(T) * model.obs_dim();
  ProjectionWeights w = make_weights(model, WeightKind::smoothing);

  const Matrix a_sxz = apply_transition_rows(model, moments.cov_XZ, counter);
  const Matrix D = block_cholesky(moments.cov_ZZ, model.obs_dim(), counter);
  // W^T = Sigma_ZZ^{-1} (A Sigma_XZ)^T through D then D^T.
  Matrix wt = D.triangularView<Eigen::Lower>().solve(a_sxz.transpose());
  D.transpose().triangularView<Eigen::Upper>().solveInPlace(wt);
  w.weights = wt.transpose();
  set_bias(model, moments, w, counter);

  charge(counter, [&](OpCounter& c) {
    c.triangular_solve(nz, 2 * nx);
    c.note_memory(nx * nx + 2 * nx * nz + nz * nz + nz * nz);
  });
  return w;
}

ProjectionWeights batch_smoothing_weights(const Model& model, OpCounter* counter) {
  return batch_smoothing_weights(model, compute_moments(model, counter), counter);
}

ProjectionWeights wiener_hopf_weights(const Model& model, const JointMoments& moments,
                                      OpCounter* counter) {
  const int T = model.horizon();
  const int d = model.state_dim();
  const int m = model.obs_dim();
  const Eigen::Index nx = idx(T) * d;
  const Eigen::Index nz = idx(T) * m;
  ProjectionWeights w = make_weights(model, WeightKind::filtering);

  const Matrix a_sxz = apply_transition_rows(model, moments.cov_XZ, counter);
  const Matrix D = block_cholesky(moments.cov_ZZ, m, counter);
  // M^T = D^{-1} (A Sigma_XZ)^T, i.e. M = A Sigma_XZ D^{-T}.
  Matrix mt = D.triangularView<Eigen::Lower>().solve(a_sxz.transpose());
  // Causal part: block (i, j) survives only for j <= i.
  for (int i = 0; i < T; ++i) {
    const Eigen::Index first_future = idx(i + 1) * m;
    mt.block(first_future, idx(i) * d, nz - first_future, d).setZero();
  }
  // W^T = D^{-T} M_lower^T.
  D.transpose().triangularView<Eigen::Upper>().solveInPlace(mt);
  w.weights = mt.transpose();
  for (int i = 0; i < T; ++i) {
    const Eigen::Index first_future = idx(i + 1) * m;
    w.weights.block(idx(i) * d, first_future, d, nz - first_future).setZero();
  }
  set_bias(model, moments, w, counter);

  charge(counter, [&](OpCounter& c) {
    c.triangular_solve(nz, 2 * nx);
    c.note_memory(nx * nx + 2 * nx * nz + 2 * nz * nz);
  });
  return w;
}

ProjectionWeights wiener_hopf_weights(const Model& model, OpCounter* counter) {
  return wiener_hopf_weights(model, compute_moments(model, counter), counter);
}

Vector predict_from_weights(const Model& model, const ProjectionWeights& weights,
                            const VectorSeq& observations, OpCounter* counter) {
  expect_observations(model, observations);
  const int d = model.state_dim();
  const Vector z = stack(VectorSeq(observations.begin(), observations.begin() + model.horizon()));
  const Vector x_last = weights.weights.bottomRows(d) * z + weights.bias.tail(d);
  charge(counter, [&](OpCounter& c) {
    c.gemv(d, z.size());
    c.gemv(model.obs_dim(), d);
  });
  return model.C(model.horizon()) * x_last;
}

Vector batch_smoothing_predict(const Model& model, const VectorSeq& observations,
                               OpCounter* counter) {
  return predict_from_weights(model, batch_smoothing_weights(model, counter), observations, counter);
}

FilteredPrediction wiener_hopf_predict(const Model& model, const VectorSeq& observations,
                                       OpCounter* counter) {
  expect_observations(model, observations);
  const JointMoments moments = compute_moments(model, counter);
  const ProjectionWeights w = wiener_hopf_weights(model, moments, counter);
  FilteredPrediction out;
  // Xhat = A Xbar + W (Z - Zbar), evaluated in the centered form.
  const Vector a_xbar = stack(apply_transition_stacked(model, moments.state_means, counter));
  out.filtered = unstack(a_xbar + w.weights * centered_observations(observations, moments, model.horizon()),
                         model.horizon());
  out.z_hat = model.C(model.horizon()) * out.filtered.back();
  charge(counter, [&](OpCounter& c) { c.gemv(w.weights.rows(), w.weights.cols()); });
  return out;
}

ControlSequence control_from_weights(const ProjectionWeights& weights, const Vector& f) {
  if (f.size() != weights.state_dim) throw ShapeError("terminal vector has wrong length");
  ControlSequence u(weights.horizon, weights.obs_dim);
  for (int t = 0; t < weights.horizon; ++t)
    u.at(t) = -weights.block(weights.horizon - 1, t).transpose() * f;
  return u;
}

Vector prior_prediction(const Model& model) { return model.C(0) * model.init_mean(); }

}  // namespace dualfilter
