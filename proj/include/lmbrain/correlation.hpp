#pragma once

#include "lmbrain/rng.hpp"
#include "lmbrain/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace lmbrain {

/// A correlation value plus a flag for inputs where it is undefined
/// (constant or all-tied series). Flagged values are reported as 0.
struct Correlation {
  double value = 0.0;
  bool degenerate = false;
};

struct SpearmanResult {
  double rho = 0.0;
  double p_perm = 1.0;  // one-sided, upper tail
  double p_t = 1.0;     // two-sided Student-t approximation, n-2 dof
  bool degenerate = false;
};

inline constexpr std::size_t kDefaultPermutations = 10000;

// Two-sided p-value of a Student-t statistic.
double student_t_two_sided(double t, double dof);

// Pearson correlation, two-pass (centered) formulation.
template <typename DA, typename DB>
Correlation pearson(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
  if (a.size() < 3) throw DimensionError("pearson: need at least 3 samples");
  const auto n = static_cast<double>(a.size());
  const auto av = a.template cast<double>().reshaped();
  const auto bv = b.template cast<double>().reshaped();
  const double ma = av.sum() / n;
  const double mb = bv.sum() / n;
  const Vector ca = av.array() - ma;
  const Vector cb = bv.array() - mb;
  const double saa = ca.squaredNorm();
  const double sbb = cb.squaredNorm();
  if (saa <= 0.0 || sbb <= 0.0) return {0.0, true};
  const double r = ca.dot(cb) / std::sqrt(saa * sbb);
  return {std::clamp(r, -1.0, 1.0), false};
}

// Fractional ranks starting at 1; ties share their average rank.
template <typename Derived>
Vector fractional_ranks(const Eigen::MatrixBase<Derived>& x) {
  const Index n = x.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return x(i) < x(j); });
  Vector ranks(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index m = i; m <= j; ++m) ranks(order[m]) = avg;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation with a seeded permutation test.
///
/// p_perm counts shuffles of b whose rho is at least the observed one,
/// (count + 1) / (n_perm + 1). All-tied input gives a flagged rho of 0.
template <typename DA, typename DB>
SpearmanResult spearman(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                        std::size_t n_perm = kDefaultPermutations, std::uint64_t seed = 0) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 4) throw DimensionError("spearman: need at least 4 samples");
  const Vector ra = fractional_ranks(a.template cast<double>().reshaped().eval());
  Vector rb = fractional_ranks(b.template cast<double>().reshaped().eval());
  const Correlation obs = pearson(ra, rb);
  SpearmanResult out;
  if (obs.degenerate) {
    out.degenerate = true;
    return out;
  }
  out.rho = obs.value;

  const double dof = static_cast<double>(a.size() - 2);
  if (std::abs(out.rho) >= 1.0) {
    out.p_t = 0.0;
  } else {
    const double t = out.rho * std::sqrt(dof / (1.0 - out.rho * out.rho));
    out.p_t = student_t_two_sided(t, dof);
  }

  if (n_perm > 0) {
    Rng rng(seed);
    std::size_t hits = 0;
    constexpr double slack = 1e-12;
    for (std::size_t p = 0; p < n_perm; ++p) {
      rng.shuffle(std::span<double>(rb.data(), static_cast<std::size_t>(rb.size())));
      if (pearson(ra, rb).value >= out.rho - slack) ++hits;
    }
    out.p_perm = static_cast<double>(hits + 1) / static_cast<double>(n_perm + 1);
  }
  return out;
}

}  // namespace lmbrain
