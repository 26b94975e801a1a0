#include "lmbrain/encoder.hpp"

#include "lmbrain/correlation.hpp"
#include "lmbrain/parallel.hpp"
#include "lmbrain/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lmbrain {

std::vector<double> log_spaced(double lo, double hi, Index count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("log_spaced: invalid range");
  std::vector<double> out(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[static_cast<std::size_t>(i)] = std::pow(10.0, std::log10(lo) + f * (std::log10(hi) - std::log10(lo)));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_alpha_grid() { return log_spaced(1e-1, 1e8, 10); }

FoldLayout make_fold_layout(Index n_rows, const EncodingConfig& cfg) {
  FoldLayout layout;
  layout.n_rows = n_rows;
  if (!cfg.fold_starts.empty()) {
    layout.starts = cfg.fold_starts;
    if (layout.starts.front() != 0 || !std::is_sorted(layout.starts.begin(), layout.starts.end()) ||
        std::adjacent_find(layout.starts.begin(), layout.starts.end()) != layout.starts.end() ||
        layout.starts.back() >= n_rows) {
      throw ConfigError("encoding: fold starts must begin at 0, increase strictly and stay below T");
    }
    if (layout.folds() < 2) throw ConfigError("encoding: need at least 2 folds");
    return layout;
  }
  if (cfg.n_folds < 2) throw ConfigError("encoding: need at least 2 folds");
  if (cfg.n_folds > n_rows) throw ConfigError("encoding: more folds than rows");
  for (Index f = 0; f < cfg.n_folds; ++f) layout.starts.push_back(f * n_rows / cfg.n_folds);
  return layout;
}

namespace {

struct Block {
  Index begin, end;
};

struct SpectralFit {
  Vector xmean;
  Matrix xc;   // centered training design
  Matrix q;    // eigenvectors of xc^T xc
  Vector eig;  // eigenvalues, clamped >= 0
  std::vector<Index> rows;
};

SpectralFit prepare(const Matrix& X, std::vector<Index> rows) {
  SpectralFit s;
  s.rows = std::move(rows);
  if (s.rows.size() < 2) throw ConfigError("encoding: training set has fewer than 2 rows");
  const Matrix xtr = X(s.rows, Eigen::all);
  s.xmean = xtr.colwise().mean().transpose();
  s.xc = xtr.rowwise() - s.xmean.transpose();
  const Matrix gram = s.xc.transpose() * s.xc;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw FitError("encoding: eigendecomposition failed");
  s.q = es.eigenvectors();
  s.eig = es.eigenvalues().cwiseMax(0.0);
  return s;
}

std::vector<Index> rows_outside(Index n_rows, std::span<const Block> excluded) {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(n_rows));
  for (Index r = 0; r < n_rows; ++r) {
    const bool skip = std::any_of(excluded.begin(), excluded.end(),
                                  [&](const Block& b) { return r >= b.begin && r < b.end; });
    if (!skip) rows.push_back(r);
  }
  return rows;
}

std::vector<Index> scoring_rows(const Block& b, Index guard, const std::vector<bool>& mask) {
  std::vector<Index> rows;
  for (Index r = b.begin + guard; r < b.end; ++r) {
    if (!mask.empty() && mask[static_cast<std::size_t>(r)]) continue;
    rows.push_back(r);
  }
  if (rows.size() < 3) {
    throw ConfigError("encoding: fold [" + std::to_string(b.begin) + "," + std::to_string(b.end) +
                      ") has fewer than 3 scorable TRs");
  }
  return rows;
}

// Training-centered response projected on the eigenbasis: Q^T Xc^T (w - mean).
Vector project_response(const SpectralFit& s, const Matrix& W, Index v) {
  const Vector wtr = W(s.rows, v);
  const Vector xtw = s.xc.transpose() * (wtr.array() - wtr.mean()).matrix();
  return s.q.transpose() * xtw;
}

// Ridge coefficients in the eigenbasis; null directions stay at zero when alpha = 0.
Vector shrink(const Vector& b, const Vector& eig, double alpha) {
  Vector coef(b.size());
  for (Index i = 0; i < b.size(); ++i) {
    const double denom = eig(i) + alpha;
    coef(i) = denom > 0.0 ? b(i) / denom : 0.0;
  }
  return coef;
}

}  // namespace

RidgeResult fit_encoding(const Matrix& X, const BoldMatrix& W, const EncodingConfig& cfg,
                         const std::vector<bool>& score_mask) {
  if (X.rows() != W.n_tr()) throw DimensionError("fit_encoding: X and W row counts differ");
  if (X.cols() < 1) throw DimensionError("fit_encoding: empty design");
  if (!score_mask.empty() && static_cast<Index>(score_mask.size()) != X.rows()) {
    throw DimensionError("fit_encoding: mask length differs from T");
  }
  if (cfg.alpha_grid.empty()) throw ConfigError("fit_encoding: empty alpha grid");
  if (cfg.guard_rows < 0) throw ConfigError("fit_encoding: negative guard rows");
  require_finite(X, "fit_encoding design");

  std::vector<double> grid = cfg.alpha_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (!(grid.front() >= 0.0)) throw ConfigError("fit_encoding: alphas must be nonnegative");

  const Index T = X.rows();
  const Index l = W.n_voxels();
  const auto n_alpha = static_cast<Index>(grid.size());
  const Matrix& Y = W.data;

  RidgeResult res;
  res.layout = make_fold_layout(T, cfg);
  res.alpha_grid = grid;
  const Index n_folds = res.layout.folds();
  res.fold_weights.assign(static_cast<std::size_t>(n_folds), Matrix::Zero(X.cols(), l));
  res.alpha_index = Eigen::MatrixXi::Zero(n_folds, l);
  res.fold_accuracy = Matrix::Zero(n_folds, l);

  for (Index f = 0; f < n_folds; ++f) {
    const Block outer{res.layout.begin(f), res.layout.end(f)};
    const auto test_rows = scoring_rows(outer, cfg.guard_rows, score_mask);

    // Inner validation blocks: the other folds, or two halves of a lone one.
    std::vector<Block> inner;
    for (Index g = 0; g < n_folds; ++g)
      if (g != f) inner.push_back({res.layout.begin(g), res.layout.end(g)});
    if (inner.size() == 1) {
      const Block only = inner.front();
      const Index mid = only.begin + (only.end - only.begin) / 2;
      inner = {{only.begin, mid}, {mid, only.end}};
    }

    Matrix inner_score = Matrix::Zero(n_alpha, l);
    for (const Block& val : inner) {
      const std::array<Block, 2> held{outer, val};
      const SpectralFit fit = prepare(X, rows_outside(T, held));
      const auto val_rows = scoring_rows(val, cfg.guard_rows, score_mask);
      const Matrix xq = (X(val_rows, Eigen::all).rowwise() - fit.xmean.transpose()) * fit.q;
      parallel_for(static_cast<std::size_t>(l), [&](std::size_t vi) {
        const auto v = static_cast<Index>(vi);
        const Vector b = project_response(fit, Y, v);
        const Vector wval = Y(val_rows, v);
        for (Index a = 0; a < n_alpha; ++a) {
          const Vector coef = shrink(b, fit.eig, grid[static_cast<std::size_t>(a)]);
          const Vector pred = xq * coef;
          inner_score(a, v) += pearson(pred, wval).value;
        }
      });
    }

    const std::array<Block, 1> held{outer};
    const SpectralFit fit = prepare(X, rows_outside(T, held));
    const Matrix xq = (X(test_rows, Eigen::all).rowwise() - fit.xmean.transpose()) * fit.q;
    parallel_for(static_cast<std::size_t>(l), [&](std::size_t vi) {
      const auto v = static_cast<Index>(vi);
      Index best = 0;
      for (Index a = 1; a < n_alpha; ++a)
        if (inner_score(a, v) > inner_score(best, v)) best = a;
      res.alpha_index(f, v) = static_cast<int>(best);

      const Vector b = project_response(fit, Y, v);
      const Vector coef = shrink(b, fit.eig, grid[static_cast<std::size_t>(best)]);
      res.fold_weights[static_cast<std::size_t>(f)].col(v) = fit.q * coef;
      const Vector pred = xq * coef;
      res.fold_accuracy(f, v) = pearson(pred, Y(test_rows, v)).value;
    });
  }

  res.mean_accuracy = res.fold_accuracy.colwise().mean().transpose();
  return res;
}

std::string MapProvenance::describe() const {
  std::ostringstream os;
  os << (feature_set.empty() ? "map" : feature_set);
  if (layer >= 0) os << "@layer" << layer;
  if (!partition.empty()) os << "[" << partition << "]";
  if (!parents.empty()) {
    os << "(";
    for (std::size_t i = 0; i < parents.size(); ++i) os << (i ? " - " : "") << parents[i];
    os << ")";
  }
  return os.str();
}

AccuracyMap accuracy_map(const RidgeResult& r, const BoldMatrix& W, MapProvenance provenance) {
  if (r.mean_accuracy.size() != W.n_voxels()) throw DimensionError("accuracy_map: voxel count mismatch");
  return {r.fold_accuracy.colwise().mean().transpose(), W.voxel_ids, std::move(provenance)};
}

AccuracyMap diff_map(const AccuracyMap& a, const AccuracyMap& b) {
  if (a.voxel_ids != b.voxel_ids || a.values.size() != b.values.size()) {
    throw DimensionError("diff_map: maps cover different voxel sets");
  }
  AccuracyMap out{a.values - b.values, a.voxel_ids, {}};
  out.provenance.feature_set = "diff";
  out.provenance.layer = a.provenance.layer == b.provenance.layer ? a.provenance.layer : -1;
  out.provenance.parents = {a.provenance.describe(), b.provenance.describe()};
  return out;
}

std::string accuracy_map_csv(const AccuracyMap& m, const std::string& comment) {
  std::ostringstream os;
  os.precision(17);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "# map=" << m.provenance.describe() << '\n';
  os << "voxel_id,value\n";
  for (Index i = 0; i < m.values.size(); ++i) os << m.voxel_ids[static_cast<std::size_t>(i)] << ',' << m.values(i) << '\n';
  return os.str();
}

AccuracyMap load_accuracy_map_csv(const std::filesystem::path& path) {
  const Matrix m = load_csv_matrix(path);
  if (m.cols() != 2) throw FormatError("accuracy map CSV: expected voxel_id,value", 0);
  AccuracyMap out;
  out.values = m.col(1);
  out.voxel_ids.resize(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) out.voxel_ids[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(m(i, 0));
  out.provenance.feature_set = path.stem().string();
  return out;
}

Matrix select_and_expand(const Matrix& X, const std::vector<Index>& columns, std::span<const int> lags) {
  for (Index c : columns)
    if (c < 0 || c >= X.cols()) throw DimensionError("select_and_expand: column out of range");
  const Matrix sub = X(Eigen::all, columns);
  return lags.empty() ? sub : fir_expand(sub, lags);
}

NullStats shuffle_null(const Matrix& features, const BoldMatrix& W, const EncodingConfig& cfg,
                       std::span<const int> lags, Index n_shuffles, std::uint64_t seed, NullMode mode,
                       const FeaturePartition* partition, const std::vector<bool>& score_mask) {
  if (n_shuffles < 2) throw ConfigError("shuffle_null: need at least 2 shuffles");
  if (features.rows() != W.n_tr()) throw DimensionError("shuffle_null: row count mismatch");
  std::vector<Index> all(static_cast<std::size_t>(features.cols()));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> high, low;
  if (mode == NullMode::difference) {
    if (partition == nullptr || static_cast<Index>(partition->labels.size()) != features.cols()) {
      throw ConfigError("shuffle_null: difference mode needs a partition over the feature columns");
    }
    high = partition->members(Integration::high);
    low = partition->members(Integration::low);
  }

  NullStats out;
  out.mode = mode;
  out.reference_std = mode == NullMode::single ? kReferenceNullStdSingle : kReferenceNullStdDifference;
  std::vector<double> pooled;
  for (Index s = 0; s < n_shuffles; ++s) {
    Rng rng(seed + static_cast<std::uint64_t>(s));
    const auto perm = rng.permutation(static_cast<std::size_t>(features.rows()));
    std::vector<Index> order(perm.begin(), perm.end());
    const Matrix shuffled = features(order, Eigen::all);
    Vector values;
    if (mode == NullMode::single) {
      values = fit_encoding(select_and_expand(shuffled, all, lags), W, cfg, score_mask).mean_accuracy;
    } else {
      const Vector h = fit_encoding(select_and_expand(shuffled, high, lags), W, cfg, score_mask).mean_accuracy;
      const Vector lo = fit_encoding(select_and_expand(shuffled, low, lags), W, cfg, score_mask).mean_accuracy;
      values = h - lo;
    }
    out.samples.push_back(values.mean());
    pooled.insert(pooled.end(), values.data(), values.data() + values.size());
  }

  auto mean_std = [](const std::vector<double>& xs, double& m, double& sd) {
    const Eigen::Map<const Vector> v(xs.data(), static_cast<Index>(xs.size()));
    m = v.mean();
    sd = xs.size() > 1 ? std::sqrt((v.array() - m).square().sum() / static_cast<double>(xs.size() - 1)) : 0.0;
  };
  mean_std(out.samples, out.mean, out.std);
  double pooled_mean = 0.0;
  mean_std(pooled, pooled_mean, out.voxel_std);
  return out;
}

std::vector<RoiProfile> roi_layer_profile(const std::vector<AccuracyMap>& per_layer, const RoiTable& rois,
                                          Index reference_layer) {
  if (per_layer.size() < 2) throw ConfigError("roi_layer_profile: need at least 2 layers");
  if (reference_layer < 0 || reference_layer >= static_cast<Index>(per_layer.size())) {
    throw ConfigError("roi_layer_profile: reference layer not present");
  }
  std::vector<Vector> means;
  for (const auto& m : per_layer) {
    if (m.voxel_ids != rois.voxel_ids()) throw DimensionError("roi_layer_profile: voxel set mismatch");
    means.push_back(rois.roi_means(m.values));
  }
  const auto names = rois.names();
  std::vector<RoiProfile> out;
  for (std::size_t r = 0; r < names.size(); ++r) {
    RoiProfile p{names[r], {}, false};
    const double ref = means[static_cast<std::size_t>(reference_layer)](static_cast<Index>(r));
    if (rois.columns(names[r]).empty() || !(ref > 0.0)) {
      p.flagged = true;
    } else {
      for (const auto& m : means) p.curve.push_back(m(static_cast<Index>(r)) / ref);
      p.curve[static_cast<std::size_t>(reference_layer)] = 1.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace lmbrain
