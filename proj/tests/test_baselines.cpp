#include <cmath>
#include <random>

#include "doctest.h"
#include "dualfilter/baselines.hpp"
#include "dualfilter/op_counter.hpp"
#include "dualfilter/presets.hpp"
#include "dualfilter/rng.hpp"
#include "oracles.hpp"

using namespace dualfilter;

namespace {

Matrix S(double v) { return Matrix::Constant(1, 1, v); }

Model random_model(int T, int tau, int d, int m, std::mt19937_64& rng) {
  ModelData md;
  md.horizon = T;
  md.order = tau;
  md.state_dim = d;
  md.obs_dim = m;
  md.transitions = TransitionBank(T, tau, d);
  for (int t = 1; t <= T; ++t)
    for (int s = 1; s <= md.transitions.lags(t); ++s)
      md.transitions.at(t, s) = oracle::random_matrix(d, d, rng, 0.4 / (s * std::sqrt(d)));
  for (int t = 0; t <= T; ++t) {
    md.observation.push_back(oracle::random_matrix(m, d, rng));
    md.obs_noise.push_back(oracle::random_spd(m, rng, 0.2));
    md.process_noise.push_back(t == 0 ? Matrix::Zero(d, d) : Matrix(0.1 * oracle::random_spd(d, rng)));
  }
  md.init_mean = oracle::random_vector(d, rng);
  md.init_cov = oracle::random_spd(d, rng);
  return Model(std::move(md));
}

Model one_step_model(const oracle::OneStep& o) {
  ModelData d;
  d.horizon = d.order = 1;
  d.state_dim = d.obs_dim = 1;
  d.transitions = TransitionBank(1, 1, 1);
  d.transitions.at(1, 1) = S(o.a);
  d.observation = {S(o.c0), S(o.c1)};
  d.process_noise = {S(0.0), S(o.q1)};
  d.obs_noise = {S(o.r0), S(0.3)};
  d.init_mean = Vector::Constant(1, o.mu0);
  d.init_cov = S(o.sigma0);
  return Model(std::move(d));
}

VectorSeq past_of(const Model& m, std::uint64_t seed) {
  const SampledPath p = sample_path(m, seed);
  return VectorSeq(p.observations.begin(), p.observations.begin() + m.horizon());
}

double rel(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff() / (1 + b.cwiseAbs().maxCoeff()); }

}  // namespace

TEST_CASE("one-step closed forms") {
  const oracle::OneStep o{0.8, 1.3, 0.7, 0.4, 0.6, 0.25, 0.15};
  const Model m = one_step_model(o);
  const VectorSeq z{Vector::Constant(1, 0.9)};
  const double expect = o.predict(0.9);
  CHECK(kalman_growing_predict(m, z).z_hat[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(batch_smoothing_predict(m, z)[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(wiener_hopf_predict(m, z).z_hat[0] == doctest::Approx(expect).epsilon(1e-12));
  const ProjectionWeights w = batch_smoothing_weights(m);
  CHECK(w.block(0, 0)(0, 0) == doctest::Approx(o.smoothing_weight()).epsilon(1e-12));
  CHECK(control_from_weights(w, Vector::Constant(1, o.c1)).at(0)[0] ==
        doctest::Approx(o.control()).epsilon(1e-12));
}

TEST_CASE("growing Kalman") {
  std::mt19937_64 rng(31);
  SUBCASE("phases and dimensions") {
    const Model m = random_model(4, 2, 2, 1, rng);
    GrowingKalman k(m);
    CHECK(k.phase() == GrowingKalman::Phase::predicted);
    CHECK(k.estimate().size() == 2);
    k.correct(Vector::Ones(1));
    CHECK(k.phase() == GrowingKalman::Phase::corrected);
    k.transition();
    CHECK(k.time() == 1);
    CHECK(k.estimate().size() == 4);
    CHECK(k.covariance().rows() == 4);
    CHECK_THROWS(k.transition());
  }
  SUBCASE("noiseless model propagates the mean") {
    ModelData d = random_model(6, 3, 2, 2, rng).data();
    d.init_cov.setZero();
    for (auto& q : d.process_noise) q.setZero();
    const Model m(std::move(d));
    const VectorSeq z = past_of(m, 3);
    const KalmanPrediction p = kalman_growing_predict(m, z);
    const Vector x = sample_path(m, 3).states[6];
    CHECK(rel(p.x_hat, x) <= 1e-12);
  }
  SUBCASE("covariance stays symmetric") {
    const Model m = build_preset(Preset::oscillating, 30);
    const VectorSeq z = past_of(m, 5);
    GrowingKalman k(m);
    for (int t = 0; t < 30; ++t) {
      k.correct(z[t]);
      CHECK((k.covariance() - k.covariance().transpose()).norm() <= 1e-12 * k.covariance().norm());
      k.transition();
    }
  }
  SUBCASE("matches dense conditioning") {
    for (int rep = 0; rep < 5; ++rep) {
      const Model m = random_model(7, 1 + rep, 1 + rep % 3, 1 + rep % 2, rng);
      const VectorSeq z = past_of(m, 40 + rep);
      CHECK(rel(kalman_growing_predict(m, z).z_hat, oracle::conditional_prediction(m, z)) <= 1e-10);
    }
  }
  SUBCASE("wrong observation count") {
    const Model m = build_preset(Preset::tracking, 4);
    CHECK_THROWS_AS(kalman_growing_predict(m, VectorSeq(3, Vector::Zero(1))), ShapeError);
  }
}

TEST_CASE("block Cholesky") {
  std::mt19937_64 rng(32);
  SUBCASE("block diagonal input") {
    const Matrix a = oracle::random_spd(2, rng), b = oracle::random_spd(2, rng);
    Matrix sigma = Matrix::Zero(4, 4);
    sigma.topLeftCorner(2, 2) = a;
    sigma.bottomRightCorner(2, 2) = b;
    const Matrix D = block_cholesky(sigma, 2);
    CHECK((D.topLeftCorner(2, 2) - Matrix(a.llt().matrixL())).norm() <= 1e-15);
    CHECK((D.bottomRightCorner(2, 2) - Matrix(b.llt().matrixL())).norm() <= 1e-15);
    CHECK(D.bottomLeftCorner(2, 2).isZero());
  }
  SUBCASE("scalar blocks reduce to ordinary Cholesky") {
    const Matrix sigma = oracle::random_spd(6, rng);
    CHECK((block_cholesky(sigma, 1) - Matrix(sigma.llt().matrixL())).norm() <= 1e-13);
  }
  SUBCASE("reconstruction") {
    const Matrix sigma = oracle::random_spd(8, rng);
    const Matrix D = block_cholesky(sigma, 2);
    CHECK((D * D.transpose() - sigma).norm() <= 1e-12 * sigma.norm());
    CHECK(D.isLowerTriangular());
  }
  SUBCASE("counter charge") {
    OpCounter c;
    block_cholesky(oracle::random_spd(8, rng), 2, &c);
    CHECK(c.total() > 0);
  }
  SUBCASE("failure names the block row") {
    Matrix sigma = oracle::random_spd(6, rng);
    sigma.block(4, 4, 2, 2) = -Matrix::Identity(2, 2);
    sigma.block(4, 0, 2, 4).setZero();
    sigma.block(0, 4, 4, 2).setZero();
    try {
      block_cholesky(sigma, 2);
      FAIL("expected a factorization error");
    } catch (const FactorizationError& e) {
      CHECK(e.block_row() == 2);
    }
  }
}

TEST_CASE("batch smoothing weights") {
  std::mt19937_64 rng(33);
  SUBCASE("memoryless model has zero weights") {
    ModelData d = random_model(5, 2, 2, 1, rng).data();
    d.transitions = TransitionBank(5, 2, 2);
    const Model m(std::move(d));
    const ProjectionWeights w = batch_smoothing_weights(m);
    CHECK(w.weights.isZero());
    CHECK(w.bias.isZero());
  }
  SUBCASE("unbiased at the mean") {
    const Model m = random_model(6, 3, 2, 2, rng);
    const JointMoments mo = compute_moments(m);
    const ProjectionWeights w = batch_smoothing_weights(m, mo);
    const VectorSeq out = w.apply(mo.obs_means);
    const VectorSeq ax = apply_transition_stacked(m, mo.state_means);
    for (int t = 0; t < 6; ++t) CHECK(rel(out[t], ax[t]) <= 1e-12);
    const Vector z = predict_from_weights(m, w, mo.obs_means);
    CHECK(rel(z, m.C(6) * ax[5]) <= 1e-12);
  }
  SUBCASE("matches dense conditioning") {
    for (int rep = 0; rep < 5; ++rep) {
      const Model m = random_model(8, 1 + 2 * rep % 8, 1 + rep % 3, 1 + rep % 2, rng);
      const VectorSeq z = past_of(m, 60 + rep);
      CHECK(rel(batch_smoothing_predict(m, z), oracle::conditional_prediction(m, z)) <= 1e-10);
    }
  }
}

TEST_CASE("Wiener-Hopf weights") {
  std::mt19937_64 rng(34);
  SUBCASE("strictly causal blocks are exactly zero") {
    for (Preset p : {Preset::tracking, Preset::oscillating, Preset::fractional}) {
      const ProjectionWeights w = wiener_hopf_weights(build_preset(p, 20));
      CHECK(w.kind == WeightKind::filtering);
      for (int i = 0; i < 20; ++i)
        for (int j = i + 1; j < 20; ++j) CHECK(w.block(i, j)(0, 0) == 0.0);
    }
  }
  SUBCASE("last row equals smoothing") {
    const Model m = build_preset(Preset::tracking, 16);
    const ProjectionWeights f = wiener_hopf_weights(m);
    const ProjectionWeights s = batch_smoothing_weights(m);
    for (int j = 0; j < 16; ++j) CHECK(f.block(15, j)(0, 0) == doctest::Approx(s.block(15, j)(0, 0)).epsilon(1e-9));
  }
  SUBCASE("already causal input is unchanged") {
    // Independent states observed directly: Sigma_ZZ diagonal and A Sigma_XZ
    // block diagonal after the one-step shift.
    ModelData d;
    d.horizon = 5;
    d.order = 1;
    d.state_dim = d.obs_dim = 1;
    d.transitions = TransitionBank(5, 1, 1);
    for (int t = 1; t <= 5; ++t) d.transitions.at(t, 1) = S(0.0);
    d.observation.assign(6, S(1.0));
    d.process_noise.assign(6, S(0.5));
    d.obs_noise.assign(6, S(0.2));
    d.init_mean = Vector::Zero(1);
    d.init_cov = S(1.0);
    const Model m(std::move(d));
    CHECK((wiener_hopf_weights(m).weights - batch_smoothing_weights(m).weights).norm() <= 1e-15);
  }
  SUBCASE("centered input gives A Xbar") {
    const Model m = random_model(6, 2, 2, 1, rng);
    const JointMoments mo = compute_moments(m);
    const FilteredPrediction p = wiener_hopf_predict(m, mo.obs_means);
    const VectorSeq ax = apply_transition_stacked(m, mo.state_means);
    for (int t = 0; t < 6; ++t) CHECK(rel(p.filtered[t], ax[t]) <= 1e-12);
  }
  SUBCASE("filtered trajectory equals Kalman on each prefix") {
    const Model m = random_model(9, 4, 2, 2, rng);
    const VectorSeq z = past_of(m, 11);
    const FilteredPrediction p = wiener_hopf_predict(m, z);
    for (int t = 1; t <= 9; ++t) {
      const VectorSeq prefix(z.begin(), z.begin() + t);
      CHECK(rel(p.filtered[t - 1], kalman_growing_predict(truncate(m, t), prefix).x_hat) <= 1e-10);
    }
  }
  SUBCASE("perturbing the future leaves the present bit-unchanged") {
    const Model m = build_preset(Preset::fractional, 24);
    const VectorSeq z = past_of(m, 12);
    const FilteredPrediction base = wiener_hopf_predict(m, z);
    for (int tp = 0; tp < 24; tp += 5) {
      VectorSeq bumped = z;
      bumped[tp][0] += 3.7;
      const FilteredPrediction moved = wiener_hopf_predict(m, bumped);
      // Xhat_{t|t-1} sits at index t-1 and uses Z_0..Z_{t-1}.
      for (int t = 1; t <= tp; ++t) CHECK(moved.filtered[t - 1] == base.filtered[t - 1]);
    }
  }
}

TEST_CASE("four estimators agree on presets") {
  for (Preset p : {Preset::tracking, Preset::oscillating, Preset::fractional}) {
    for (int T : {1, 7, 40, 64}) {
      const Model m = build_preset(p, T);
      const VectorSeq z = past_of(m, 1000 + T);
      const Vector k = kalman_growing_predict(m, z).z_hat;
      const Vector s = batch_smoothing_predict(m, z);
      const Vector w = wiener_hopf_predict(m, z).z_hat;
      const Vector d = predict_next(m, z).z_hat;
      CHECK(rel(k, d) <= 1e-8);
      CHECK(rel(s, d) <= 1e-8);
      CHECK(rel(w, d) <= 1e-8);
    }
  }
}

TEST_CASE("control extraction") {
  const Model m = build_preset(Preset::tracking, 40);
  const ProjectionWeights s = batch_smoothing_weights(m);
  CHECK(control_from_weights(s, Vector::Zero(1)).values().isZero());
  const Vector f = m.C(40).transpose();
  const DualSolution sol = solve_dual_control(m, f);
  REQUIRE(sol.report.converged);
  CHECK((control_from_weights(s, f).values() - sol.control.values()).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((control_from_weights(wiener_hopf_weights(m), f).values() - sol.control.values()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("prior prediction") {
  const Model m = build_preset(Preset::fractional, 3);
  CHECK(prior_prediction(m)[0] == doctest::Approx(m.C(0)(0, 0) * 1.0));
}

TEST_CASE("smoothing residual is orthogonal to the observations") {
  const int T = 8, n = 100000;
  const Model m = build_preset(Preset::oscillating, T);
  const JointMoments mo = compute_moments(m);
  const ProjectionWeights w = batch_smoothing_weights(m, mo);
  const NoiseFactors factors(m);
  const Matrix last = w.weights.bottomRows(1);
  Matrix prod(n, T);
  for (int i = 0; i < n; ++i) {
    const SampledPath p = sample_path(m, factors, derive_seed(55, i));
    Vector z(T);
    for (int t = 0; t < T; ++t) z[t] = p.observations[t][0];
    const double residual = p.states[T][0] - (last * z)(0, 0) - w.bias[T - 1];
    for (int t = 0; t < T; ++t) prod(i, t) = residual * (z[t] - mo.obs_means[t][0]);
  }
  for (int t = 0; t < T; ++t) {
    const double mean = prod.col(t).mean();
    const double se = std::sqrt((prod.col(t).array() - mean).square().mean() / n);
    CHECK(std::abs(mean) <= 3.0 * se);
  }
}
