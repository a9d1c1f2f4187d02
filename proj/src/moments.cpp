#include "dualfilter/model.hpp"
#include "dualfilter/op_counter.hpp"

namespace dualfilter {

JointMoments compute_moments(const Model& model, OpCounter* counter) {
  const int T = model.horizon();
  const int d = model.state_dim();
  const int m = model.obs_dim();
  const Eigen::Index nx = static_cast<Eigen::Index>(T) * d;
  const Eigen::Index nz = static_cast<Eigen::Index>(T) * m;

  JointMoments out;
  out.state_means.resize(T);
  out.obs_means.resize(T);
  out.state_means[0] = model.init_mean();
  for (int t = 1; t < T; ++t) {
    Vector mean = Vector::Zero(d);
    for (int s = 1; s <= model.memory(t); ++s) mean.noalias() += model.A(t, s) * out.state_means[t - s];
    out.state_means[t] = std::move(mean);
  }
  for (int t = 0; t < T; ++t) out.obs_means[t] = model.C(t) * out.state_means[t];

  // Row block r of Sigma_XX over columns 0..r-1 is the padded transition row
  // applied to the first r block rows; the diagonal block adds Q_r.
  Matrix& xx = out.cov_XX;
  xx.setZero(nx, nx);
  xx.topLeftCorner(d, d) = model.init_cov();
  std::int64_t work = 0;
  for (int r = 1; r < T; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * d;
    auto past = xx.block(row, 0, d, row);
    for (int s = 1; s <= model.memory(r); ++s) {
      past.noalias() += model.A(r, s) * xx.block(row - static_cast<Eigen::Index>(s) * d, 0, d, row);
    }
    xx.block(0, row, row, d) = past.transpose();
    Matrix diag = model.Q(r);
    for (int s = 1; s <= model.memory(r); ++s)
      diag.noalias() += model.A(r, s) * xx.block(row - static_cast<Eigen::Index>(s) * d, row, d, d);
    xx.block(row, row, d, d) = 0.5 * (diag + diag.transpose());
    work += static_cast<std::int64_t>(model.memory(r)) * d * d * (row + d);
  }

  out.cov_XZ.resize(nx, nz);
  out.cov_ZZ.resize(nz, nz);
  for (int j = 0; j < T; ++j) {
    out.cov_XZ.middleCols(static_cast<Eigen::Index>(j) * m, m).noalias() =
        xx.middleCols(static_cast<Eigen::Index>(j) * d, d) * model.C(j).transpose();
  }
  for (int i = 0; i < T; ++i) {
    out.cov_ZZ.middleRows(static_cast<Eigen::Index>(i) * m, m).noalias() =
        model.C(i) * out.cov_XZ.middleRows(static_cast<Eigen::Index>(i) * d, d);
    out.cov_ZZ.block(static_cast<Eigen::Index>(i) * m, static_cast<Eigen::Index>(i) * m, m, m) +=
        model.R(i);
  }
  out.cov_ZZ = 0.5 * (out.cov_ZZ + out.cov_ZZ.transpose()).eval();

  charge(counter, [&](OpCounter& c) {
    c.axpy(work);
    c.gemm(nx, d, nz);
    c.gemm(nz, d, nz);
    c.note_memory(nx * nx + nx * nz + nz * nz);
  });
  return out;
}

}  // namespace dualfilter
