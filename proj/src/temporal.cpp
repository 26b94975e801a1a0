#include "lmbrain/temporal.hpp"

#include "lmbrain/parallel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace lmbrain {

Vector TimeConstantTable::lambdas() const {
  Vector v(size());
  for (Index i = 0; i < size(); ++i) v(i) = fits[static_cast<std::size_t>(i)].lambda;
  return v;
}

Vector TimeConstantTable::lambda_seconds() const { return lambdas() * seconds_per_lag; }

std::vector<bool> TimeConstantTable::flags() const {
  std::vector<bool> f(fits.size());
  for (std::size_t i = 0; i < fits.size(); ++i) f[i] = fits[i].degenerate;
  return f;
}

Correlation autocorr(const Vector& series, Index tau) {
  const Index n = series.size();
  if (tau < 0 || tau >= n - 2) {
    throw DimensionError("autocorr: lag " + std::to_string(tau) + " needs a series longer than " +
                         std::to_string(tau + 2));
  }
  return pearson(series.tail(n - tau), series.head(n - tau));
}

double time_constant_objective(const Vector& ac_values, double lambda) {
  double sse = 0.0;
  for (Index i = 0; i < ac_values.size(); ++i) {
    if (std::isnan(ac_values(i))) continue;
    const double r = std::exp(-static_cast<double>(i + 1) / lambda) - ac_values(i);
    sse += r * r;
  }
  return sse;
}

TimeConstantFit fit_time_constant(const Vector& ac_values, const TimeConstantGrid& grid) {
  if (ac_values.size() < 2) throw FitError("fit_time_constant: need at least 2 lags");
  if (ac_values.array().isNaN().all()) throw FitError("fit_time_constant: all autocorrelations are NaN");
  if (!(grid.lambda_min > 0.0) || !(grid.lambda_cap > grid.lambda_min) || grid.points < 3) {
    throw ConfigError("fit_time_constant: invalid grid");
  }

  const double log_lo = std::log(grid.lambda_min);
  const double log_hi = std::log(grid.lambda_cap);
  auto grid_point = [&](Index i) {
    if (i == 0) return grid.lambda_min;
    if (i == grid.points - 1) return grid.lambda_cap;
    return std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) /
                                 static_cast<double>(grid.points - 1));
  };

  Index best = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < grid.points; ++i) {
    const double obj = time_constant_objective(ac_values, grid_point(i));
    if (obj < best_obj) {
      best_obj = obj;
      best = i;
    }
  }
  if (best == 0 || best == grid.points - 1) return {grid_point(best), best_obj, true};

  // Golden-section search on the bracket around the best grid point.
  constexpr double inv_phi = 0.6180339887498949;
  double a = grid_point(best - 1);
  double b = grid_point(best + 1);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = time_constant_objective(ac_values, c);
  double fd = time_constant_objective(ac_values, d);
  while (b - a > 1e-10 * (a + b)) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = time_constant_objective(ac_values, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = time_constant_objective(ac_values, d);
    }
  }
  const double lambda = 0.5 * (a + b);
  const double obj = time_constant_objective(ac_values, lambda);
  if (obj <= best_obj) return {lambda, obj, false};
  return {grid_point(best), best_obj, false};
}

namespace {

TimeConstantFit fit_series(const Vector& series, Index max_lag, const TimeConstantGrid& grid) {
  Vector ac(max_lag);
  for (Index tau = 1; tau <= max_lag; ++tau) ac(tau - 1) = autocorr(series, tau).value;
  return fit_time_constant(ac, grid);
}

TimeConstantTable fit_columns(const Matrix& data, Index max_lag, const TimeConstantGrid& grid) {
  if (max_lag < 2) throw ConfigError("time constants: max_lag must be >= 2");
  if (data.rows() <= max_lag + 2) {
    throw DimensionError("time constants: need more than max_lag + 2 samples");
  }
  TimeConstantTable table;
  table.max_lag = max_lag;
  table.fits.resize(static_cast<std::size_t>(data.cols()));
  parallel_for(table.fits.size(), [&](std::size_t c) {
    table.fits[c] = fit_series(data.col(static_cast<Index>(c)), max_lag, grid);
  });
  return table;
}

}  // namespace

TimeConstantTable time_constant_map(const BoldMatrix& bold, Index max_lag, const TimeConstantGrid& grid) {
  auto table = fit_columns(bold.data, max_lag, grid);
  table.unit = LagUnit::tr;
  table.seconds_per_lag = bold.tr_seconds;
  return table;
}

TimeConstantTable lm_feature_time_constants(const Matrix& features, Index max_lag,
                                            const TimeConstantGrid& grid) {
  auto table = fit_columns(features, max_lag, grid);
  table.unit = LagUnit::token;
  table.seconds_per_lag = 0.0;
  return table;
}

namespace {

std::string table_csv(const TimeConstantTable& table, const std::vector<std::int64_t>& ids,
                      const std::string& comment, double threshold_seconds, bool display) {
  if (!ids.empty() && static_cast<Index>(ids.size()) != table.size()) {
    throw DimensionError("time constant CSV: id count mismatch");
  }
  const bool seconds = table.unit == LagUnit::tr;
  std::ostringstream os;
  os.precision(10);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "series_id,lambda" << (seconds ? ",lambda_seconds" : "") << ",residual,flag\n";
  for (Index i = 0; i < table.size(); ++i) {
    const auto& f = table.fits[static_cast<std::size_t>(i)];
    const double sec = f.lambda * table.seconds_per_lag;
    if (display && (f.degenerate || (seconds && sec < threshold_seconds))) continue;
    os << (ids.empty() ? i : ids[static_cast<std::size_t>(i)]) << ',' << f.lambda;
    if (seconds) os << ',' << sec;
    os << ',' << f.residual << ',' << (f.degenerate ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace

std::string time_constant_csv(const TimeConstantTable& table, const std::vector<std::int64_t>& ids,
                              const std::string& comment) {
  return table_csv(table, ids, comment, 0.0, false);
}

std::string time_constant_display_csv(const TimeConstantTable& table,
                                      const std::vector<std::int64_t>& ids, double threshold_seconds,
                                      const std::string& comment) {
  return table_csv(table, ids, comment, threshold_seconds, true);
}

}  // namespace lmbrain
