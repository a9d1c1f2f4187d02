#pragma once

#include "dualfilter/model.hpp"

namespace dualfilter::detail {

// acc += A_{t,s} x, A given as a column-major d x d block.
inline void block_gemv(const double* a, const double* x, double* acc, int d) {
  if (d == 1) {
    acc[0] += a[0] * x[0];
    return;
  }
  for (int j = 0; j < d; ++j) {
    const double xj = x[j];
    for (int i = 0; i < d; ++i) acc[i] += a[i + j * d] * xj;
  }
}

// acc += A^T x.
inline void block_gemv_t(const double* a, const double* x, double* acc, int d) {
  if (d == 1) {
    acc[0] += a[0] * x[0];
    return;
  }
  for (int j = 0; j < d; ++j) {
    double sum = 0.0;
    for (int i = 0; i < d; ++i) sum += a[i + j * d] * x[i];
    acc[j] += sum;
  }
}

// acc += sum_{s=1}^{memory(t)} A_{t,s} cols(t - s); cols is d x (T+1).
inline void causal_sum(const TransitionBank& bank, int t, const Matrix& cols, double* acc) {
  const int d = bank.dim();
  const int lags = bank.lags(t);
  const double* a = bank.data(t, 1);
  const std::ptrdiff_t bs = static_cast<std::ptrdiff_t>(d) * d;
  if (d == 1) {
    const double* x = cols.data() + (t - 1);
    double sum = 0.0;
    for (int s = 0; s < lags; ++s) sum += a[s] * x[-s];
    acc[0] += sum;
    return;
  }
  for (int s = 1; s <= lags; ++s) block_gemv(a + (s - 1) * bs, cols.col(t - s).data(), acc, d);
}

// acc += sum_{s=1}^{min(order, T-t)} A_{t+s,s}^T cols(t + s).
inline void anticausal_sum(const TransitionBank& bank, int t, int horizon, const Matrix& cols,
                           double* acc) {
  const int d = bank.dim();
  const int lags = std::min(bank.order(), horizon - t);
  for (int s = 1; s <= lags; ++s) block_gemv_t(bank.data(t + s, s), cols.col(t + s).data(), acc, d);
}

inline VectorSeq columns_to_seq(const Matrix& cols) {
  VectorSeq out(static_cast<std::size_t>(cols.cols()));
  for (Eigen::Index t = 0; t < cols.cols(); ++t) out[static_cast<std::size_t>(t)] = cols.col(t);
  return out;
}

}  // namespace dualfilter::detail
