#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical paths.

#include "lmbrain/rng.hpp"
#include "lmbrain/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using lmbrain::Index;
using lmbrain::Matrix;
using lmbrain::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  lmbrain::Rng rng(seed);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

inline Vector random_vector(Index n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Sample covariance (T-1) by explicit loops.
inline Matrix naive_covariance(const Matrix& x) {
  const Index n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Index c = 0; c < d; ++c) {
    for (Index r = 0; r < n; ++r) mean[c] += x(r, c);
    mean[c] /= static_cast<double>(n);
  }
  Matrix cov(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      double s = 0.0;
      for (Index r = 0; r < n; ++r) s += (x(r, i) - mean[i]) * (x(r, j) - mean[j]);
      cov(i, j) = s / static_cast<double>(n - 1);
    }
  return cov;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration(const Matrix& a, int iters = 2000) {
  Vector v = Vector::Ones(a.rows()).normalized();
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vector w = naive_matmul(a, v);
    lambda = w.norm();
    v = w / lambda;
  }
  return lambda;
}

/// Gradient descent on ||w - X v||^2 + alpha ||v||^2 with step 1/L, stopped
/// when the gradient norm falls below tol.
inline Vector gd_ridge(const Matrix& x, const Vector& w, double alpha, double tol = 1e-10,
                       long max_iter = 5'000'000) {
  Matrix h = naive_matmul(x.transpose(), x);
  for (Index i = 0; i < h.rows(); ++i) h(i, i) += alpha;
  const Vector xtw = naive_matmul(x.transpose(), w);
  const double step = 1.0 / (2.0 * power_iteration(h));
  Vector v = Vector::Zero(x.cols());
  for (long it = 0; it < max_iter; ++it) {
    const Vector grad = 2.0 * (naive_matmul(h, v) - xtw);
    if (grad.norm() < tol) break;
    v -= step * grad;
  }
  return v;
}

// Median by sorting (midpoint of the two middle entries for even counts).
inline double sorted_median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// AR(1) series x[t] = rho x[t-1] + e, stationary start.
inline Vector ar1(Index n, double rho, std::uint64_t seed) {
  lmbrain::Rng rng(seed);
  Vector x(n);
  x(0) = rng.normal() / std::sqrt(1.0 - rho * rho);
  for (Index t = 1; t < n; ++t) x(t) = rho * x(t - 1) + rng.normal();
  return x;
}

}  // namespace oracle
