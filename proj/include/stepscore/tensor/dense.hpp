#pragma once

// Plain Eigen kernels shared by the autodiff ops and by code that only needs
// values (inference helpers, metrics). Templated on the expression type so
// they work for any scalar Eigen understands.

#include <Eigen/Dense>
#include <cmath>

namespace stepscore::dense {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar top = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - top).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Softmax over the entries where `allowed` is true; the rest come out as 0.
/// A row with no allowed entry yields NaN and must be rejected by the caller.
template <typename Derived, typename MaskDerived>
RowMatrix<typename Derived::Scalar> masked_softmax_rows(const Eigen::MatrixBase<Derived>& x,
                                                        const Eigen::MatrixBase<MaskDerived>& allowed) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Scalar top = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (allowed(r, c)) top = std::max(top, x(r, c));
    Scalar total = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!allowed(r, c)) continue;
      out(r, c) = std::exp(x(r, c) - top);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> logsumexp_rows(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar top = x.row(r).maxCoeff();
    out(r) = top + std::log((x.row(r).array() - top).exp().sum());
  }
  return out;
}

/// Per-row standardization: (x - mean) / sqrt(var + eps), population variance.
template <typename Derived>
RowMatrix<typename Derived::Scalar> standardize_rows(const Eigen::MatrixBase<Derived>& x,
                                                     typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    out.row(r) = (centered / std::sqrt(var + eps)).matrix();
  }
  return out;
}

/// softmax(q kᵀ / sqrt(d_k)) v without masking.
template <typename DQ, typename DK, typename DV>
RowMatrix<typename DQ::Scalar> attention(const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k,
                                         const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DQ::Scalar;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(k.cols()));
  RowMatrix<Scalar> scores = (q * k.transpose()) * scale;
  return softmax_rows(scores) * v;
}

}  // namespace stepscore::dense
