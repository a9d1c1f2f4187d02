#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualfilter {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A time-indexed sequence of vectors, one entry per time step.
using VectorSeq = std::vector<Vector>;

class OpCounter;

/// Thrown for structurally malformed input: wrong shapes, wrong sequence
/// lengths, out-of-range indices.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical factorization fails on data that should have been
/// positive (semi)definite.
class InvalidModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ragged bank of transition blocks A_{t,s}, t in 1..T, s in 1..min(order, t),
/// stored contiguously (time-major, then lag, each block column-major).
class TransitionBank {
 public:
  using BlockMap = Eigen::Map<Matrix>;
  using ConstBlockMap = Eigen::Map<const Matrix>;

  TransitionBank() = default;
  /// Zero-filled bank.
  TransitionBank(int horizon, int order, int dim);

  int horizon() const { return horizon_; }
  int order() const { return order_; }
  int dim() const { return dim_; }
  int lags(int t) const { return t < 1 ? 0 : std::min(order_, t); }
  std::int64_t block_count() const { return offsets_.empty() ? 0 : offsets_.back() / block_size(); }

  BlockMap at(int t, int s) { return BlockMap(data(t, s), dim_, dim_); }
  ConstBlockMap at(int t, int s) const { return ConstBlockMap(data(t, s), dim_, dim_); }

  /// Pointer to the first entry of A_{t,s}; lags of one time are adjacent.
  const double* data(int t, int s) const { return values_.data() + offsets_[t] + (s - 1) * block_size(); }
  double* data(int t, int s) { return values_.data() + offsets_[t] + (s - 1) * block_size(); }

  /// Copy restricted to `horizon` steps and `order` lags; lags beyond the
  /// source order are zero.
  TransitionBank reshaped(int horizon, int order) const;

 private:
  std::int64_t block_size() const { return static_cast<std::int64_t>(dim_) * dim_; }

  int horizon_ = 0;
  int order_ = 0;
  int dim_ = 0;
  std::vector<std::int64_t> offsets_;  // offsets_[t] = first entry of time t; size T + 2
  std::vector<double> values_;
};

/// Raw ingredients of a model. All index conventions are by time:
///   transitions.at(t, s) = A_{t,s}  for t in 1..T, s in 1..min(order, t)
///   observation[t]       = C_t      for t in 0..T
///   process_noise[t]     = Q_t      for t in 1..T  (entry 0 is ignored)
///   obs_noise[t]         = R_t      for t in 0..T
struct ModelData {
  int horizon = 0;
  int order = 0;
  int state_dim = 0;
  int obs_dim = 0;
  TransitionBank transitions;
  std::vector<Matrix> observation;
  std::vector<Matrix> process_noise;
  std::vector<Matrix> obs_noise;
  Vector init_mean;
  Matrix init_cov;
};

/// Causal non-Markovian linear Gaussian model
///
///   X_t = sum_{s=1}^{min(order,t)} A_{t,s} X_{t-s} + B_t,   1 <= t <= T
///   Z_t = C_t X_t + W_t,                                    0 <= t <= T
///
/// with X_0 ~ N(mu0, Sigma0), B_t ~ N(0, Q_t), W_t ~ N(0, R_t).
///
/// The transition bank is ragged: time t stores exactly min(order, t) blocks.
/// The stacked T*d x T*d operator is never materialized. Immutable once built.
class Model {
 public:
  /// Checks shapes only; numeric properties are reported by validate_model.
  explicit Model(ModelData data);

  int horizon() const { return data_.horizon; }
  int order() const { return data_.order; }
  int state_dim() const { return data_.state_dim; }
  int obs_dim() const { return data_.obs_dim; }

  /// Number of stored lags at time t, min(order, t).
  int memory(int t) const { return data_.transitions.lags(t); }

  TransitionBank::ConstBlockMap A(int t, int s) const { return data_.transitions.at(t, s); }
  const TransitionBank& bank() const { return data_.transitions; }
  const Matrix& C(int t) const { return data_.observation[t]; }
  const Matrix& Q(int t) const { return data_.process_noise[t]; }
  const Matrix& R(int t) const { return data_.obs_noise[t]; }
  const Vector& init_mean() const { return data_.init_mean; }
  const Matrix& init_cov() const { return data_.init_cov; }

  const ModelData& data() const { return data_; }

  /// Total number of stored transition blocks, sum_t min(order, t).
  std::int64_t transition_blocks() const { return data_.transitions.block_count(); }

 private:
  ModelData data_;
};

/// Restricts a model to horizon `horizon` <= model.horizon(). The result
/// describes the same process observed over a shorter window.
Model truncate(const Model& model, int horizon);

/// Returns a copy with at most `order` lags kept at every time step.
Model with_order(const Model& model, int order);

/// Returns a copy whose bank stores min(T, t) lags at every t, padding
/// missing lags with zero blocks.
Model with_full_order(const Model& model);

struct Violation {
  std::string where;
  std::string reason;

  std::string message() const { return where + " " + reason; }
};

/// Every violated invariant of the model; empty when the model is valid.
std::vector<Violation> validate_model(const Model& model);

/// One realization of the model together with the noise that produced it.
struct SampledPath {
  VectorSeq states;        // X_0..X_T
  VectorSeq observations;  // Z_0..Z_T
  Vector noise_init;       // the draw X_0
  VectorSeq noise_process; // B_t at index t for t in 1..T; index 0 is empty
  VectorSeq noise_obs;     // W_0..W_T
};

/// Per-time square-root factors F with F F^T equal to each covariance.
/// Building them once lets many paths share the factorization work.
class NoiseFactors {
 public:
  explicit NoiseFactors(const Model& model);

  const Matrix& init() const { return init_; }
  const Matrix& process(int t) const { return process_[t]; }
  const Matrix& obs(int t) const { return obs_[t]; }

 private:
  Matrix init_;
  std::vector<Matrix> process_;
  std::vector<Matrix> obs_;
};

/// Square-root factor of a symmetric positive semidefinite matrix.
/// Eigenvalues in [-1e-10 * trace, 0] are clamped to zero; anything more
/// negative raises InvalidModelError.
Matrix psd_sqrt(const Matrix& cov, const std::string& name);

/// Draws one path. Same (model, seed) always yields the same bits.
SampledPath sample_path(const Model& model, std::uint64_t seed);
SampledPath sample_path(const Model& model, const NoiseFactors& factors,
                        std::uint64_t seed);

/// Replays the state recursion from the stored noise draws.
VectorSeq replay_states(const Model& model, const Vector& init,
                        const VectorSeq& process_noise);

/// Block operator A acting on v_{0:T-1}; entry t-1 of the result holds
/// sum_s A_{t,s} v_{t-s} for t in 1..T.
VectorSeq apply_transition_stacked(const Model& model, const VectorSeq& v,
                                   OpCounter* counter = nullptr);

/// Adjoint A^T acting on w_{1:T} (w[0] holds w_1); entry t of the result
/// holds sum_s A_{t+s,s}^T w_{t+s} for t in 0..T-1.
VectorSeq apply_transition_adjoint_stacked(const Model& model,
                                           const VectorSeq& w,
                                           OpCounter* counter = nullptr);

/// Stacked means and block covariances over times 0..T-1.
struct JointMoments {
  VectorSeq state_means;  // Xbar_t
  VectorSeq obs_means;    // Zbar_t
  Matrix cov_XX;          // Td x Td
  Matrix cov_XZ;          // Td x Tm
  Matrix cov_ZZ;          // Tm x Tm
};

JointMoments compute_moments(const Model& model, OpCounter* counter = nullptr);

/// Stacks a sequence into one column vector.
Vector stack(const VectorSeq& seq);
/// Splits a column vector into `count` pieces of equal size.
VectorSeq unstack(const Vector& v, int count);

}  // namespace dualfilter
