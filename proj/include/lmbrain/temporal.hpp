#pragma once

#include "lmbrain/align.hpp"
#include "lmbrain/correlation.hpp"
#include "lmbrain/types.hpp"

#include <string>
#include <vector>

namespace lmbrain {

enum class LagUnit { tr, token };

struct TimeConstantFit {
  double lambda = 0.0;    // in lag units
  double residual = 0.0;  // sum of squared errors at lambda
  bool degenerate = false;
};

struct TimeConstantTable {
  LagUnit unit = LagUnit::tr;
  double seconds_per_lag = 0.0;  // tr_seconds for voxel tables, 0 for tokens
  Index max_lag = 0;
  std::vector<TimeConstantFit> fits;

  Index size() const { return static_cast<Index>(fits.size()); }
  Vector lambdas() const;
  Vector lambda_seconds() const;
  std::vector<bool> flags() const;
};

struct TimeConstantGrid {
  double lambda_min = 0.1;
  double lambda_cap = 100.0;
  Index points = 200;
};

/// Pearson correlation of x[t] with x[t - tau] over the overlapping samples.
Correlation autocorr(const Vector& series, Index tau);

/// Least-squares fit of exp(-tau / lambda) to ac_values, where ac_values[i]
/// holds the autocorrelation at tau = i + 1. Log-spaced grid search followed
/// by golden-section refinement between the best point's neighbours. NaN
/// entries are skipped; negative correlations stay in the objective. A fit
/// that lands on either grid bound is flagged degenerate.
TimeConstantFit fit_time_constant(const Vector& ac_values, const TimeConstantGrid& grid = {});

double time_constant_objective(const Vector& ac_values, double lambda);

// Per-voxel decay constants (TR units) from AC at tau = 1..max_lag.
TimeConstantTable time_constant_map(const BoldMatrix& bold, Index max_lag = 10,
                                    const TimeConstantGrid& grid = {});

// Per-dimension decay constants of token-level features (no PCA).
TimeConstantTable lm_feature_time_constants(const Matrix& features, Index max_lag = 50,
                                            const TimeConstantGrid& grid = {});

// CSV "series_id,lambda,lambda_seconds,residual,flag". The display variant
// keeps only unflagged series with lambda_seconds >= threshold_seconds.
std::string time_constant_csv(const TimeConstantTable& table, const std::vector<std::int64_t>& ids,
                              const std::string& comment = {});
std::string time_constant_display_csv(const TimeConstantTable& table,
                                      const std::vector<std::int64_t>& ids,
                                      double threshold_seconds = 1.5,
                                      const std::string& comment = {});

}  // namespace lmbrain
