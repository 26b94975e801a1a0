#pragma once

#include "lmbrain/align.hpp"
#include "lmbrain/causal.hpp"
#include "lmbrain/roi.hpp"
#include "lmbrain/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lmbrain {

// 10 log-spaced values from 1e-1 to 1e8.
std::vector<double> default_alpha_grid();
std::vector<double> log_spaced(double lo, double hi, Index count);

struct EncodingConfig {
  Index n_folds = 5;
  std::vector<double> alpha_grid = default_alpha_grid();
  // Leading rows of every fold left out of scoring (set to the largest FIR
  // delay so no score depends on another fold's stimulus).
  Index guard_rows = 0;
  // Explicit fold boundaries, e.g. one fold per story. Overrides n_folds.
  std::vector<Index> fold_starts;
};

struct FoldLayout {
  std::vector<Index> starts;  // first row of each fold
  Index n_rows = 0;

  Index folds() const { return static_cast<Index>(starts.size()); }
  Index begin(Index f) const { return starts[static_cast<std::size_t>(f)]; }
  Index end(Index f) const { return f + 1 < folds() ? starts[static_cast<std::size_t>(f + 1)] : n_rows; }
};

FoldLayout make_fold_layout(Index n_rows, const EncodingConfig& cfg);

struct RidgeResult {
  FoldLayout layout;
  std::vector<double> alpha_grid;
  std::vector<Matrix> fold_weights;  // per outer fold, d_eff x l
  Eigen::MatrixXi alpha_index;       // n_folds x l, index into alpha_grid
  Matrix fold_accuracy;              // n_folds x l
  Vector mean_accuracy;              // l

  double alpha(Index fold, Index voxel) const {
    return alpha_grid[static_cast<std::size_t>(alpha_index(fold, voxel))];
  }
};

/// Nested cross-validated ridge encoding of X onto every voxel of W.
///
/// Outer loop: each contiguous fold is held out once. Inner loop: for the
/// remaining folds, each is held out in turn and the per-voxel alpha with the
/// best mean validation correlation wins (ties go to the smaller alpha). The
/// outer fold is then scored by Pearson correlation of its prediction.
/// Design and response are centered with training-row means only. Rows in
/// `score_mask` (true = exclude) and each fold's guard rows are never scored.
RidgeResult fit_encoding(const Matrix& X, const BoldMatrix& W, const EncodingConfig& cfg = {},
                         const std::vector<bool>& score_mask = {});

struct MapProvenance {
  std::string feature_set;  // e.g. "full", "partition:high", "diff"
  Index layer = -1;
  std::string partition;
  std::vector<std::string> parents;

  std::string describe() const;
};

struct AccuracyMap {
  Vector values;
  std::vector<std::int64_t> voxel_ids;
  MapProvenance provenance;
};

AccuracyMap accuracy_map(const RidgeResult& r, const BoldMatrix& W, MapProvenance provenance = {});

// Entrywise a - b over an identical voxel set.
AccuracyMap diff_map(const AccuracyMap& a, const AccuracyMap& b);

std::string accuracy_map_csv(const AccuracyMap& m, const std::string& comment = {});
AccuracyMap load_accuracy_map_csv(const std::filesystem::path& path);

// Column subset of X, then FIR expansion with the given lags (none if empty).
Matrix select_and_expand(const Matrix& X, const std::vector<Index>& columns, std::span<const int> lags);

enum class NullMode { single, difference };

struct NullStats {
  NullMode mode = NullMode::single;
  std::vector<double> samples;  // per-shuffle mean over voxels
  double mean = 0.0;            // of samples
  double std = 0.0;             // of samples
  double voxel_std = 0.0;       // pooled per-voxel null values
  double reference_std = 0.0;   // full-scale reference (0.003 single, 0.004 difference)
};

inline constexpr double kReferenceNullStdSingle = 0.003;
inline constexpr double kReferenceNullStdDifference = 0.004;

/// Time-shuffle null: each shuffle permutes the rows of `features` (before
/// FIR expansion) with a seeded permutation and refits. Single mode scores
/// all columns; difference mode scores high minus low columns of `partition`.
NullStats shuffle_null(const Matrix& features, const BoldMatrix& W, const EncodingConfig& cfg,
                       std::span<const int> lags, Index n_shuffles, std::uint64_t seed,
                       NullMode mode, const FeaturePartition* partition = nullptr,
                       const std::vector<bool>& score_mask = {});

struct RoiProfile {
  std::string roi;
  std::vector<double> curve;  // per layer, ratio to the reference layer
  bool flagged = false;       // reference accuracy <= 0; curve omitted
};

// Per-ROI mean accuracy per layer divided by the reference layer's mean.
std::vector<RoiProfile> roi_layer_profile(const std::vector<AccuracyMap>& per_layer,
                                          const RoiTable& rois, Index reference_layer);

}  // namespace lmbrain
