#pragma once

#include "lmbrain/correlation.hpp"
#include "lmbrain/encoder.hpp"
#include "lmbrain/roi.hpp"
#include "lmbrain/temporal.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace lmbrain {

inline constexpr double kDefaultRoiThreshold = 0.06;

struct RoiSelection {
  std::vector<std::string> rois;  // selected, sorted by name
  Vector mean_accuracy;           // per selected ROI
  double threshold = kDefaultRoiThreshold;
  bool empty = false;
};

// ROIs whose mean full-map accuracy is strictly above threshold.
RoiSelection select_rois(const AccuracyMap& full_map, const RoiTable& rois,
                         double threshold = kDefaultRoiThreshold);

struct RoiValue {
  std::string roi;
  double value = 0.0;
  Index voxel_count = 0;
};

/// Per-ROI mean of a (high - low) difference map. ROIs without voxels are
/// skipped and reported through `skipped`.
std::vector<RoiValue> integration_index(const AccuracyMap& diff, const RoiTable& rois,
                                        const std::vector<std::string>& selected,
                                        std::vector<std::string>* skipped = nullptr);

struct RoiLambda {
  std::string roi;
  double mean_seconds = 0.0;  // over unflagged voxels
  Index used = 0;
  Index flagged = 0;
  bool excluded = false;      // more than half the voxels flagged
};

std::vector<RoiLambda> roi_mean_lambda(const TimeConstantTable& table, const RoiTable& rois,
                                       const std::vector<std::string>& selected);

struct HierarchyReport {
  struct Row {
    std::string roi;
    double integration_index = 0.0;
    double mean_lambda_seconds = 0.0;
    Index voxel_count = 0;
  };
  std::vector<Row> rows;  // sorted by ROI name
  std::vector<std::string> excluded_rois;
  double threshold = kDefaultRoiThreshold;
  SpearmanResult stats;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;
};

/// Spearman rank correlation between integration index and mean time
/// constant over the ROIs present in both lists (matched by name, ordered by
/// name so the result does not depend on input order). Needs >= 4 ROIs.
HierarchyReport rank_report(const std::vector<RoiValue>& index, const std::vector<RoiLambda>& lambdas,
                            std::size_t n_perm, std::uint64_t seed);

/// select_rois -> integration_index -> roi_mean_lambda -> rank_report.
HierarchyReport build_hierarchy_report(const AccuracyMap& full_map, const AccuracyMap& diff,
                                       const TimeConstantTable& voxel_lambdas, const RoiTable& rois,
                                       double threshold, std::size_t n_perm, std::uint64_t seed);

struct DegreeLambdaResult {
  SpearmanResult stats;
  Index dims_used = 0;
};

// Spearman between raw-space in-degree and token time constants; flagged
// dims are dropped.
DegreeLambdaResult degree_vs_lambda(const Eigen::VectorXi& in_degree, const TimeConstantTable& lambdas,
                                    std::size_t n_perm = kDefaultPermutations, std::uint64_t seed = 0);

nlohmann::json to_json(const SpearmanResult& s);
nlohmann::json to_json(const HierarchyReport& r);
std::string scatter_csv(const HierarchyReport& r, const std::string& comment = {});

}  // namespace lmbrain
