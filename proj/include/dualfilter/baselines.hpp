#pragma once

#include <stdexcept>
#include <string>

#include "dualfilter/dual_filter.hpp"
#include "dualfilter/model.hpp"

namespace dualfilter {

/// Growing-state Kalman filter: the state stacks the whole history
/// X_{0:t}, so the covariance is (t+1)d square at step t.
class GrowingKalman {
 public:
  enum class Phase { predicted, corrected };

  explicit GrowingKalman(const Model& model, OpCounter* counter = nullptr);

  /// Correction with Z_t using the padded observation matrix [0 C_t].
  void correct(const Vector& observation);
  /// Appends X_{t+1} to the stacked state with the padded transition row.
  void transition();

  int time() const { return time_; }
  Phase phase() const { return phase_; }
  const Vector& estimate() const { return estimate_; }
  const Matrix& covariance() const { return covariance_; }
  /// Last d entries of the stacked estimate.
  Vector current() const { return estimate_.tail(model_->state_dim()); }

 private:
  const Model* model_;
  OpCounter* counter_;
  int time_ = 0;
  Phase phase_ = Phase::predicted;
  Vector estimate_;
  Matrix covariance_;
};

struct KalmanPrediction {
  Vector z_hat;
  Vector x_hat;
};

/// Runs correction/transition for t = 0..T-1 and predicts Z_T.
KalmanPrediction kalman_growing_predict(const Model& model, const VectorSeq& observations,
                                        OpCounter* counter = nullptr);

/// Raised when a block Cholesky pivot is not positive definite.
class FactorizationError : public InvalidModelError {
 public:
  FactorizationError(const std::string& what, int block_row)
      : InvalidModelError(what), block_row_(block_row) {}
  int block_row() const { return block_row_; }

 private:
  int block_row_;
};

/// Lower block Cholesky factor D with D D^T = sigma. Diagonal blocks of D
/// are the lower Cholesky factors of the Schur complements, so D is lower
/// triangular entrywise.
Matrix block_cholesky(const Matrix& sigma, int block_size, OpCounter* counter = nullptr);

enum class WeightKind { smoothing, filtering };

/// Affine map Xhat_{1:T} = W Z_{0:T-1} + b. Block (i, j) of W is d x m and
/// maps Z_j to the estimate of X_{i+1}.
struct ProjectionWeights {
  WeightKind kind = WeightKind::smoothing;
  int horizon = 0;
  int state_dim = 0;
  int obs_dim = 0;
  Matrix weights;  // Td x Tm
  Vector bias;     // Td

  auto block(int row, int col) const {
    return weights.block(static_cast<Eigen::Index>(row) * state_dim,
                         static_cast<Eigen::Index>(col) * obs_dim, state_dim, obs_dim);
  }

  /// Stacked estimates for t = 1..T.
  VectorSeq apply(const VectorSeq& observations) const;
};

ProjectionWeights batch_smoothing_weights(const Model& model, const JointMoments& moments,
                                          OpCounter* counter = nullptr);
ProjectionWeights batch_smoothing_weights(const Model& model, OpCounter* counter = nullptr);

ProjectionWeights wiener_hopf_weights(const Model& model, const JointMoments& moments,
                                      OpCounter* counter = nullptr);
ProjectionWeights wiener_hopf_weights(const Model& model, OpCounter* counter = nullptr);

/// Zhat_{T|T-1} from weights; selects the last stacked block and applies C_T.
Vector predict_from_weights(const Model& model, const ProjectionWeights& weights,
                            const VectorSeq& observations, OpCounter* counter = nullptr);

Vector batch_smoothing_predict(const Model& model, const VectorSeq& observations,
                               OpCounter* counter = nullptr);

struct FilteredPrediction {
  Vector z_hat;
  VectorSeq filtered;  // Xhat_{t|t-1} for t = 1..T
};

FilteredPrediction wiener_hopf_predict(const Model& model, const VectorSeq& observations,
                                       OpCounter* counter = nullptr);

/// u_t = -(W)_{T,t}^T f for t = 0..T-1, read off the last block row.
ControlSequence control_from_weights(const ProjectionWeights& weights, const Vector& f);

/// Prediction with no observations, C_0 mu0.
Vector prior_prediction(const Model& model);

}  // namespace dualfilter
