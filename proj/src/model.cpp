#include "dualfilter/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "dualfilter/op_counter.hpp"
#include "dualfilter/rng.hpp"
#include "kernels.hpp"

namespace dualfilter {

namespace {

std::string at(const char* name, int t) { return std::string(name) + "_" + std::to_string(t); }

std::string at(const char* name, int t, int s) {
  return std::string(name) + "_{" + std::to_string(t) + "," + std::to_string(s) + "}";
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << m.rows() << "x" << m.cols() << ", expected " << rows << "x"
       << cols;
    throw ShapeError(os.str());
  }
}

void check_psd(const Matrix& m, const std::string& name, std::vector<Violation>& out) {
  if (m != m.transpose()) {
    out.push_back({name, "not symmetric"});
    return;
  }
  if (m.size() == 0) return;
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  const double scale = std::max(m.norm(), 1e-300);
  if (!(min_eig >= -1e-10 * scale)) out.push_back({name, "not positive semidefinite"});
}

void check_pd(const Matrix& m, const std::string& name, std::vector<Violation>& out) {
  if (m != m.transpose()) {
    out.push_back({name, "not symmetric"});
    return;
  }
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  if (!(min_eig > 0.0)) out.push_back({name, "not positive definite"});
}

}  // namespace

TransitionBank::TransitionBank(int horizon, int order, int dim)
    : horizon_(horizon), order_(order), dim_(dim) {
  if (horizon < 0 || order < 0 || dim < 0) throw ShapeError("transition bank sizes must be nonnegative");
  offsets_.assign(static_cast<std::size_t>(horizon) + 2, 0);
  for (int t = 1; t <= horizon + 1; ++t)
    offsets_[t] = offsets_[t - 1] + (t - 1 >= 1 ? lags(t - 1) : 0) * block_size();
  values_.assign(static_cast<std::size_t>(offsets_.back()), 0.0);
}

TransitionBank TransitionBank::reshaped(int horizon, int order) const {
  if (horizon > horizon_) throw ShapeError("cannot extend a transition bank");
  TransitionBank out(horizon, order, dim_);
  const std::int64_t bs = block_size();
  for (int t = 1; t <= horizon; ++t) {
    const int keep = std::min(lags(t), out.lags(t));
    std::copy_n(data(t, 1), keep * bs, out.data(t, 1));
  }
  return out;
}

Model::Model(ModelData data) : data_(std::move(data)) {
  const int T = data_.horizon;
  const int d = data_.state_dim;
  const int m = data_.obs_dim;
  if (T < 1) throw ShapeError("horizon must be positive");
  if (data_.order < 1 || data_.order > T) throw ShapeError("order must lie in [1, horizon]");
  if (d < 1 || m < 1) throw ShapeError("dimensions must be positive");
  const auto& bank = data_.transitions;
  if (bank.horizon() != T || bank.order() != data_.order || bank.dim() != d) {
    std::ostringstream os;
    os << "transition bank is " << bank.horizon() << " steps, order " << bank.order() << ", dim "
       << bank.dim() << "; expected " << T << ", " << data_.order << ", " << d;
    throw ShapeError(os.str());
  }
  if (static_cast<int>(data_.observation.size()) != T + 1)
    throw ShapeError("observation matrices must cover t = 0..T");
  if (static_cast<int>(data_.obs_noise.size()) != T + 1)
    throw ShapeError("observation noise must cover t = 0..T");
  if (static_cast<int>(data_.process_noise.size()) != T + 1)
    throw ShapeError("process noise must have horizon + 1 slots (slot 0 unused)");
  for (int t = 0; t <= T; ++t) {
    expect_shape(data_.observation[t], m, d, at("C", t));
    expect_shape(data_.obs_noise[t], m, m, at("R", t));
    if (t >= 1) expect_shape(data_.process_noise[t], d, d, at("Q", t));
  }
  if (data_.init_mean.size() != d) throw ShapeError("initial mean has wrong length");
  expect_shape(data_.init_cov, d, d, "Sigma0");
}

namespace {

Model reshape(const Model& model, int horizon, int order) {
  const ModelData& src = model.data();
  ModelData d;
  d.horizon = horizon;
  d.order = order;
  d.state_dim = src.state_dim;
  d.obs_dim = src.obs_dim;
  d.transitions = src.transitions.reshaped(horizon, order);
  d.observation.assign(src.observation.begin(), src.observation.begin() + horizon + 1);
  d.process_noise.assign(src.process_noise.begin(), src.process_noise.begin() + horizon + 1);
  d.obs_noise.assign(src.obs_noise.begin(), src.obs_noise.begin() + horizon + 1);
  d.init_mean = src.init_mean;
  d.init_cov = src.init_cov;
  return Model(std::move(d));
}

}  // namespace

Model truncate(const Model& model, int horizon) {
  if (horizon < 1 || horizon > model.horizon())
    throw ShapeError("truncation horizon out of range");
  return reshape(model, horizon, std::min(model.order(), horizon));
}

Model with_order(const Model& model, int order) {
  return reshape(model, model.horizon(), std::clamp(order, 1, model.horizon()));
}

Model with_full_order(const Model& model) { return reshape(model, model.horizon(), model.horizon()); }

std::vector<Violation> validate_model(const Model& model) {
  std::vector<Violation> out;
  const int T = model.horizon();
  check_psd(model.init_cov(), "Sigma0", out);
  for (int t = 1; t <= T; ++t) check_psd(model.Q(t), at("Q", t), out);
  for (int t = 0; t <= T; ++t) check_pd(model.R(t), at("R", t), out);
  for (int t = 1; t <= T; ++t) {
    for (int s = 1; s <= model.memory(t); ++s) {
      if (!model.A(t, s).allFinite()) out.push_back({at("A", t, s), "has non-finite entries"});
    }
    if (!model.C(t).allFinite()) out.push_back({at("C", t), "has non-finite entries"});
  }
  if (!model.init_mean().allFinite()) out.push_back({"mu0", "has non-finite entries"});
  return out;
}

Matrix psd_sqrt(const Matrix& cov, const std::string& name) {
  const Eigen::Index n = cov.rows();
  if (n == 0) return cov;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
    return llt.matrixL();
  // Singular or nearly singular: fall back to a clamped eigen square root.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const double tol = 1e-10 * std::max(std::abs(cov.trace()), 1e-300);
  Vector lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lambda[i] < -tol) throw InvalidModelError(name + " is not positive semidefinite");
    lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
  }
  return eig.eigenvectors() * lambda.asDiagonal();
}

NoiseFactors::NoiseFactors(const Model& model) {
  const int T = model.horizon();
  init_ = psd_sqrt(model.init_cov(), "Sigma0");
  process_.resize(T + 1);
  obs_.resize(T + 1);
  for (int t = 1; t <= T; ++t) process_[t] = psd_sqrt(model.Q(t), at("Q", t));
  for (int t = 0; t <= T; ++t) obs_[t] = psd_sqrt(model.R(t), at("R", t));
}

VectorSeq replay_states(const Model& model, const Vector& init, const VectorSeq& process_noise) {
  const int T = model.horizon();
  if (static_cast<int>(process_noise.size()) != T + 1)
    throw ShapeError("process noise must have horizon + 1 slots");
  Matrix x(model.state_dim(), T + 1);
  x.col(0) = init;
  for (int t = 1; t <= T; ++t) {
    x.col(t) = process_noise[t];
    detail::causal_sum(model.bank(), t, x, x.col(t).data());
  }
  return detail::columns_to_seq(x);
}

SampledPath sample_path(const Model& model, std::uint64_t seed) {
  return sample_path(model, NoiseFactors(model), seed);
}

SampledPath sample_path(const Model& model, const NoiseFactors& factors, std::uint64_t seed) {
  const int T = model.horizon();
  const int d = model.state_dim();
  const int m = model.obs_dim();
  GaussianStream init_rng(seed, NoiseStream::init);
  GaussianStream process_rng(seed, NoiseStream::process);
  GaussianStream obs_rng(seed, NoiseStream::observation);

  SampledPath path;
  path.noise_init = model.init_mean() + factors.init() * init_rng.next_vector(d);
  path.noise_process.resize(T + 1);
  for (int t = 1; t <= T; ++t) path.noise_process[t] = factors.process(t) * process_rng.next_vector(d);
  path.noise_obs.resize(T + 1);
  for (int t = 0; t <= T; ++t) path.noise_obs[t] = factors.obs(t) * obs_rng.next_vector(m);

  path.states = replay_states(model, path.noise_init, path.noise_process);
  path.observations.resize(T + 1);
  for (int t = 0; t <= T; ++t) path.observations[t] = model.C(t) * path.states[t] + path.noise_obs[t];
  return path;
}

VectorSeq apply_transition_stacked(const Model& model, const VectorSeq& v, OpCounter* counter) {
  const int T = model.horizon();
  const int d = model.state_dim();
  if (static_cast<int>(v.size()) != T) throw ShapeError("stacked input must have horizon entries");
  VectorSeq out(T);
  for (int t = 1; t <= T; ++t) {
    Vector acc = Vector::Zero(d);
    for (int s = 1; s <= model.memory(t); ++s) acc.noalias() += model.A(t, s) * v[t - s];
    out[t - 1] = std::move(acc);
  }
  charge(counter, [&](OpCounter& c) { c.gemv(model.transition_blocks() * d, d); });
  return out;
}

VectorSeq apply_transition_adjoint_stacked(const Model& model, const VectorSeq& w,
                                           OpCounter* counter) {
  const int T = model.horizon();
  const int d = model.state_dim();
  if (static_cast<int>(w.size()) != T) throw ShapeError("stacked input must have horizon entries");
  VectorSeq out(T, Vector::Zero(d));
  // Scatter each A_{t,s}^T w_t into slot t - s.
  for (int t = 1; t <= T; ++t) {
    for (int s = 1; s <= model.memory(t); ++s)
      out[t - s].noalias() += model.A(t, s).transpose() * w[t - 1];
  }
  charge(counter, [&](OpCounter& c) { c.gemv(model.transition_blocks() * d, d); });
  return out;
}

Vector stack(const VectorSeq& seq) {
  Eigen::Index n = 0;
  for (const auto& v : seq) n += v.size();
  Vector out(n);
  Eigen::Index off = 0;
  for (const auto& v : seq) {
    out.segment(off, v.size()) = v;
    off += v.size();
  }
  return out;
}

VectorSeq unstack(const Vector& v, int count) {
  if (count <= 0 || v.size() % count != 0) throw ShapeError("cannot split vector evenly");
  const Eigen::Index n = v.size() / count;
  VectorSeq out(count);
  for (int i = 0; i < count; ++i) out[i] = v.segment(i * n, n);
  return out;
}

}  // namespace dualfilter
