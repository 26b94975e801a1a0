#pragma once

#include "lmbrain/io.hpp"
#include "lmbrain/types.hpp"

#include <span>
#include <vector>

namespace lmbrain {

struct BoldMatrix {
  Matrix data;  // T x l
  double tr_seconds = 1.5;
  std::vector<std::int64_t> voxel_ids;

  BoldMatrix() = default;
  // Voxel ids default to 0..l-1.
  BoldMatrix(Matrix d, double tr, std::vector<std::int64_t> ids = {});

  Index n_tr() const { return data.rows(); }
  Index n_voxels() const { return data.cols(); }
  void validate() const;
};

struct AlignedFeatures {
  Matrix features;         // n_tr x d
  std::vector<bool> empty;  // TRs that received no token
};

/// Averages token-level features into TR bins. A token at time t lands in
/// TR floor(t / tr_seconds); TRs without tokens get a zero row and a mask bit.
AlignedFeatures align_tokens_to_tr(const Matrix& token_features, const TokenTimeline& timeline,
                                   Index n_tr);

std::vector<int> default_fir_lags();  // 3..9 TRs

/// Concatenates delayed copies of X, lag-major: block b holds X shifted down
/// by lags[b] rows with zeros on top. With segment starts (e.g. one per
/// story), delays never reach across a segment boundary.
Matrix fir_expand(const Matrix& X, std::span<const int> lags);
Matrix fir_expand(const Matrix& X, std::span<const int> lags, std::span<const Index> segment_starts);

}  // namespace lmbrain
