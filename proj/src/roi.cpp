#include "lmbrain/roi.hpp"

#include <unordered_map>

namespace lmbrain {

RoiTable::RoiTable(const std::vector<RoiLabel>& labels, const std::vector<std::int64_t>& voxel_ids)
    : voxel_ids_(voxel_ids) {
  std::unordered_map<std::int64_t, Index> column;
  for (std::size_t i = 0; i < voxel_ids.size(); ++i) column.emplace(voxel_ids[i], static_cast<Index>(i));
  std::unordered_map<std::int64_t, std::string> seen;
  for (const auto& l : labels) {
    const auto [it, inserted] = seen.emplace(l.voxel_index, l.roi);
    if (!inserted) {
      if (it->second != l.roi) {
        throw ConfigError("ROI table: voxel " + std::to_string(l.voxel_index) +
                          " assigned to both " + it->second + " and " + l.roi);
      }
      continue;
    }
    const auto c = column.find(l.voxel_index);
    if (c == column.end()) continue;
    rois_[l.roi].push_back(c->second);
  }
}

std::vector<std::string> RoiTable::names() const {
  std::vector<std::string> out;
  out.reserve(rois_.size());
  for (const auto& [name, cols] : rois_) out.push_back(name);
  return out;
}

const std::vector<Index>& RoiTable::columns(const std::string& roi) const {
  const auto it = rois_.find(roi);
  if (it == rois_.end()) throw ConfigError("ROI table: unknown ROI " + roi);
  return it->second;
}

Vector RoiTable::roi_means(const Vector& values) const {
  if (values.size() != static_cast<Index>(voxel_ids_.size())) {
    throw DimensionError("ROI means: value count does not match voxel table");
  }
  Vector out(static_cast<Index>(rois_.size()));
  Index i = 0;
  for (const auto& [name, cols] : rois_) {
    double s = 0.0;
    for (Index c : cols) s += values(c);
    out(i++) = cols.empty() ? 0.0 : s / static_cast<double>(cols.size());
  }
  return out;
}

}  // namespace lmbrain
