#pragma once

#include "lmbrain/types.hpp"

#include <Eigen/SVD>

namespace lmbrain {

template <typename Scalar>
struct PcaModel {
  Vec<Scalar> mean;                // length d
  Mat<Scalar> projection;          // d x k, orthonormal columns
  Vec<Scalar> explained_variance;  // length k, descending

  Index dim() const { return projection.rows(); }
  Index components() const { return projection.cols(); }

  static PcaModel identity(Index d) {
    return {Vec<Scalar>::Zero(d), Mat<Scalar>::Identity(d, d), Vec<Scalar>::Ones(d)};
  }
};

/// Principal components of the rows of X via thin SVD of the centered data.
///
/// Each component is sign-normalised so that its largest-magnitude entry is
/// positive (first such entry on ties). Variances use the T-1 denominator.
/// Rank-deficient input is allowed; trailing variances are then ~0.
template <typename Derived>
PcaModel<typename Derived::Scalar> pca_fit(const Eigen::MatrixBase<Derived>& X, Index k) {
  using Scalar = typename Derived::Scalar;
  const Index n = X.rows();
  const Index d = X.cols();
  if (n < 2) throw DimensionError("pca_fit: need at least 2 rows");
  if (k < 1 || k > std::min(n, d)) {
    throw DimensionError("pca_fit: k=" + std::to_string(k) + " outside [1, min(T,d)]");
  }
  require_finite(X, "pca_fit");

  PcaModel<Scalar> model;
  model.mean = X.colwise().mean().transpose();
  const Mat<Scalar> centered = X.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Mat<Scalar>> svd(centered, Eigen::ComputeThinV);
  model.projection = svd.matrixV().leftCols(k);
  model.explained_variance =
      svd.singularValues().head(k).array().square() / static_cast<Scalar>(n - 1);

  for (Index c = 0; c < k; ++c) {
    Index arg = 0;
    Scalar best = -1;
    for (Index r = 0; r < d; ++r) {
      const Scalar m = std::abs(model.projection(r, c));
      if (m > best) {
        best = m;
        arg = r;
      }
    }
    if (model.projection(arg, c) < 0) model.projection.col(c) *= Scalar(-1);
  }
  return model;
}

template <typename Scalar, typename Derived>
Mat<Scalar> pca_transform(const PcaModel<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
  if (X.cols() != model.dim()) {
    throw DimensionError("pca_transform: expected " + std::to_string(model.dim()) +
                         " columns, got " + std::to_string(X.cols()));
  }
  return (X.template cast<Scalar>().rowwise() - model.mean.transpose()) * model.projection;
}

}  // namespace lmbrain
