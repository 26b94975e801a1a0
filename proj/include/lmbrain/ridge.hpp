#pragma once

#include "lmbrain/types.hpp"

#include <Eigen/Cholesky>
#include <limits>

namespace lmbrain {

template <typename Scalar>
struct RidgeWeights {
  Vec<Scalar> weights;
  Scalar alpha{};
};

/// Closed-form ridge: solves (X^T X + alpha I) v = X^T w by Cholesky.
template <typename DX, typename DW>
RidgeWeights<typename DX::Scalar> ridge_solve(const Eigen::MatrixBase<DX>& X,
                                              const Eigen::MatrixBase<DW>& w,
                                              typename DX::Scalar alpha) {
  using Scalar = typename DX::Scalar;
  if (X.cols() < 1) throw DimensionError("ridge_solve: design has no columns");
  if (X.rows() != w.size()) throw DimensionError("ridge_solve: row count mismatch");
  if (!(alpha >= 0)) throw ConfigError("ridge_solve: alpha must be nonnegative");

  Mat<Scalar> gram = X.transpose() * X;
  gram.diagonal().array() += alpha;
  const Vec<Scalar> rhs = X.transpose() * w;

  Eigen::LLT<Mat<Scalar>> llt(gram);
  const Scalar floor = Scalar(100) * std::numeric_limits<Scalar>::epsilon();
  if (llt.info() != Eigen::Success || llt.rcond() < floor) {
    throw SingularError("ridge_solve: normal equations are singular at alpha=" +
                        std::to_string(static_cast<double>(alpha)));
  }
  return {llt.solve(rhs), alpha};
}

}  // namespace lmbrain
