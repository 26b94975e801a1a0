#include "lmbrain/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace lmbrain {

RoiSelection select_rois(const AccuracyMap& full_map, const RoiTable& rois, double threshold) {
  if (full_map.voxel_ids != rois.voxel_ids()) throw DimensionError("select_rois: voxel set mismatch");
  RoiSelection sel;
  sel.threshold = threshold;
  const Vector means = rois.roi_means(full_map.values);
  const auto names = rois.names();
  std::vector<double> kept;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (rois.columns(names[i]).empty()) continue;
    if (means(static_cast<Index>(i)) > threshold) {
      sel.rois.push_back(names[i]);
      kept.push_back(means(static_cast<Index>(i)));
    }
  }
  sel.mean_accuracy = Eigen::Map<Vector>(kept.data(), static_cast<Index>(kept.size()));
  sel.empty = sel.rois.empty();
  return sel;
}

std::vector<RoiValue> integration_index(const AccuracyMap& diff, const RoiTable& rois,
                                        const std::vector<std::string>& selected,
                                        std::vector<std::string>* skipped) {
  if (diff.voxel_ids != rois.voxel_ids()) throw DimensionError("integration_index: voxel set mismatch");
  std::vector<RoiValue> out;
  for (const auto& name : selected) {
    const auto& cols = rois.contains(name) ? rois.columns(name) : std::vector<Index>{};
    if (cols.empty()) {
      if (skipped) skipped->push_back(name);
      continue;
    }
    double s = 0.0;
    for (Index c : cols) s += diff.values(c);
    out.push_back({name, s / static_cast<double>(cols.size()), static_cast<Index>(cols.size())});
  }
  return out;
}

std::vector<RoiLambda> roi_mean_lambda(const TimeConstantTable& table, const RoiTable& rois,
                                       const std::vector<std::string>& selected) {
  if (table.size() != static_cast<Index>(rois.voxel_ids().size())) {
    throw DimensionError("roi_mean_lambda: table size does not match voxel set");
  }
  // Seconds when the table carries a TR duration; raw lag units otherwise.
  const double scale = table.seconds_per_lag > 0.0 ? table.seconds_per_lag : 1.0;
  std::vector<RoiLambda> out;
  for (const auto& name : selected) {
    RoiLambda r{name, 0.0, 0, 0, false};
    double s = 0.0;
    for (Index c : rois.columns(name)) {
      const auto& fit = table.fits[static_cast<std::size_t>(c)];
      if (fit.degenerate) {
        ++r.flagged;
      } else {
        ++r.used;
        s += fit.lambda * scale;
      }
    }
    r.excluded = r.used == 0 || 2 * r.flagged > r.used + r.flagged;
    r.mean_seconds = r.used > 0 ? s / static_cast<double>(r.used) : 0.0;
    out.push_back(r);
  }
  return out;
}

HierarchyReport rank_report(const std::vector<RoiValue>& index, const std::vector<RoiLambda>& lambdas,
                            std::size_t n_perm, std::uint64_t seed) {
  std::map<std::string, const RoiLambda*> by_name;
  for (const auto& l : lambdas) by_name[l.roi] = &l;

  HierarchyReport rep;
  rep.n_perm = n_perm;
  rep.seed = seed;
  for (const auto& iv : index) {
    const auto it = by_name.find(iv.roi);
    if (it == by_name.end()) continue;
    if (it->second->excluded) {
      rep.excluded_rois.push_back(iv.roi);
      continue;
    }
    rep.rows.push_back({iv.roi, iv.value, it->second->mean_seconds, iv.voxel_count});
  }
  std::sort(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) { return a.roi < b.roi; });
  std::sort(rep.excluded_rois.begin(), rep.excluded_rois.end());
  if (rep.rows.size() < 4) {
    throw ConfigError("rank_report: need at least 4 ROIs with both an index and a time constant, have " +
                      std::to_string(rep.rows.size()));
  }
  Vector idx(static_cast<Index>(rep.rows.size())), lam(static_cast<Index>(rep.rows.size()));
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    idx(static_cast<Index>(i)) = rep.rows[i].integration_index;
    lam(static_cast<Index>(i)) = rep.rows[i].mean_lambda_seconds;
  }
  rep.stats = spearman(idx, lam, n_perm, seed);
  return rep;
}

HierarchyReport build_hierarchy_report(const AccuracyMap& full_map, const AccuracyMap& diff,
                                       const TimeConstantTable& voxel_lambdas, const RoiTable& rois,
                                       double threshold, std::size_t n_perm, std::uint64_t seed) {
  const RoiSelection sel = select_rois(full_map, rois, threshold);
  if (sel.empty) throw ConfigError("hierarchy report: no ROI passes the accuracy threshold");
  const auto index = integration_index(diff, rois, sel.rois);
  const auto lambdas = roi_mean_lambda(voxel_lambdas, rois, sel.rois);
  auto rep = rank_report(index, lambdas, n_perm, seed);
  rep.threshold = threshold;
  return rep;
}

DegreeLambdaResult degree_vs_lambda(const Eigen::VectorXi& in_degree, const TimeConstantTable& lambdas,
                                    std::size_t n_perm, std::uint64_t seed) {
  if (in_degree.size() != lambdas.size()) throw DimensionError("degree_vs_lambda: dimension counts differ");
  std::vector<double> deg, lam;
  for (Index i = 0; i < in_degree.size(); ++i) {
    const auto& fit = lambdas.fits[static_cast<std::size_t>(i)];
    if (fit.degenerate) continue;
    deg.push_back(in_degree(i));
    lam.push_back(fit.lambda);
  }
  DegreeLambdaResult out;
  out.dims_used = static_cast<Index>(deg.size());
  const Eigen::Map<const Vector> d(deg.data(), out.dims_used), l(lam.data(), out.dims_used);
  out.stats = spearman(d, l, n_perm, seed);
  return out;
}

nlohmann::json to_json(const SpearmanResult& s) {
  return {{"rho", s.rho}, {"p_perm", s.p_perm}, {"p_t", s.p_t}, {"degenerate", s.degenerate}};
}

nlohmann::json to_json(const HierarchyReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"roi", row.roi},
                    {"integration_index", row.integration_index},
                    {"mean_lambda_seconds", row.mean_lambda_seconds},
                    {"voxel_count", row.voxel_count}});
  }
  return {{"spearman", to_json(r.stats)},
          {"n_rois", r.rows.size()},
          {"rois", rows},
          {"excluded_rois", r.excluded_rois},
          {"selection_threshold", r.threshold},
          {"n_perm", r.n_perm},
          {"seed", r.seed}};
}

std::string scatter_csv(const HierarchyReport& r, const std::string& comment) {
  std::ostringstream os;
  os.precision(10);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "roi,index,lambda\n";
  for (const auto& row : r.rows) os << row.roi << ',' << row.integration_index << ',' << row.mean_lambda_seconds << '\n';
  return os.str();
}

}  // namespace lmbrain
