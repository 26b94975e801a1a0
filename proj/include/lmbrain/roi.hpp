#pragma once

#include "lmbrain/io.hpp"
#include "lmbrain/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace lmbrain {

// Voxel-to-ROI assignment resolved against a map's voxel ordering.
class RoiTable {
 public:
  RoiTable() = default;
  // Every voxel maps to at most one ROI; labels for voxels outside
  // voxel_ids are ignored.
  RoiTable(const std::vector<RoiLabel>& labels, const std::vector<std::int64_t>& voxel_ids);

  // ROI names in sorted order.
  std::vector<std::string> names() const;
  // Column positions (into voxel_ids) belonging to an ROI.
  const std::vector<Index>& columns(const std::string& roi) const;
  bool contains(const std::string& roi) const { return rois_.count(roi) != 0; }
  std::size_t size() const { return rois_.size(); }
  const std::vector<std::int64_t>& voxel_ids() const { return voxel_ids_; }

  // Mean of values over each ROI's voxels, ordered as names().
  Vector roi_means(const Vector& values) const;

 private:
  std::vector<std::int64_t> voxel_ids_;
  std::map<std::string, std::vector<Index>> rois_;
};

}  // namespace lmbrain
