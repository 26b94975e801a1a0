#include "lmbrain/align.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace lmbrain {

BoldMatrix::BoldMatrix(Matrix d, double tr, std::vector<std::int64_t> ids)
    : data(std::move(d)), tr_seconds(tr), voxel_ids(std::move(ids)) {
  if (voxel_ids.empty()) {
    voxel_ids.resize(static_cast<std::size_t>(data.cols()));
    for (std::size_t i = 0; i < voxel_ids.size(); ++i) voxel_ids[i] = static_cast<std::int64_t>(i);
  }
  validate();
}

void BoldMatrix::validate() const {
  if (data.rows() < 2) throw DimensionError("BoldMatrix: need at least 2 TRs");
  if (!(tr_seconds > 0.0)) throw ConfigError("BoldMatrix: tr_seconds must be positive");
  if (static_cast<Index>(voxel_ids.size()) != data.cols()) {
    throw DimensionError("BoldMatrix: voxel id count does not match columns");
  }
  std::set<std::int64_t> seen(voxel_ids.begin(), voxel_ids.end());
  if (seen.size() != voxel_ids.size()) throw ConfigError("BoldMatrix: duplicate voxel ids");
  require_finite(data, "BoldMatrix");
}

AlignedFeatures align_tokens_to_tr(const Matrix& token_features, const TokenTimeline& timeline,
                                   Index n_tr) {
  timeline.validate();
  if (token_features.rows() != static_cast<Index>(timeline.token_times.size())) {
    throw DimensionError("align_tokens_to_tr: " + std::to_string(token_features.rows()) +
                         " feature rows for " + std::to_string(timeline.token_times.size()) +
                         " tokens");
  }
  if (n_tr < 1) throw DimensionError("align_tokens_to_tr: n_tr must be positive");

  AlignedFeatures out{Matrix::Zero(n_tr, token_features.cols()),
                      std::vector<bool>(static_cast<std::size_t>(n_tr), true)};
  std::vector<Index> counts(static_cast<std::size_t>(n_tr), 0);
  for (std::size_t i = 0; i < timeline.token_times.size(); ++i) {
    const double t = timeline.token_times[i];
    const double bin = std::floor(t / timeline.tr_seconds);
    if (t < 0.0 || bin >= static_cast<double>(n_tr)) {
      throw RangeError("align_tokens_to_tr: token " + std::to_string(i) + " at " +
                       std::to_string(t) + " s lies outside " + std::to_string(n_tr) + " TRs");
    }
    const auto tr = static_cast<Index>(bin);
    out.features.row(tr) += token_features.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(tr)];
  }
  for (Index tr = 0; tr < n_tr; ++tr) {
    const Index c = counts[static_cast<std::size_t>(tr)];
    if (c > 0) {
      out.features.row(tr) /= static_cast<double>(c);
      out.empty[static_cast<std::size_t>(tr)] = false;
    }
  }
  return out;
}

std::vector<int> default_fir_lags() { return {3, 4, 5, 6, 7, 8, 9}; }

Matrix fir_expand(const Matrix& X, std::span<const int> lags) {
  const Index zero = 0;
  return fir_expand(X, lags, std::span<const Index>(&zero, 1));
}

Matrix fir_expand(const Matrix& X, std::span<const int> lags, std::span<const Index> segment_starts) {
  if (lags.empty()) throw ConfigError("fir_expand: empty lag list");
  for (int lag : lags) {
    if (lag <= 0) throw ConfigError("fir_expand: lags must be positive, got " + std::to_string(lag));
    if (lag >= X.rows()) throw DimensionError("fir_expand: lag " + std::to_string(lag) + " >= T");
  }
  std::vector<Index> starts(segment_starts.begin(), segment_starts.end());
  if (starts.empty() || starts.front() != 0) starts.insert(starts.begin(), 0);
  if (!std::is_sorted(starts.begin(), starts.end()) || starts.back() >= X.rows()) {
    throw ConfigError("fir_expand: segment starts must be sorted and inside [0, T)");
  }

  const Index k = X.cols();
  Matrix out = Matrix::Zero(X.rows(), k * static_cast<Index>(lags.size()));
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const Index begin = starts[s];
    const Index end = s + 1 < starts.size() ? starts[s + 1] : X.rows();
    for (std::size_t b = 0; b < lags.size(); ++b) {
      const Index lag = lags[b];
      const Index n = end - begin - lag;
      if (n <= 0) continue;
      out.block(begin + lag, static_cast<Index>(b) * k, n, k) = X.block(begin, 0, n, k);
    }
  }
  return out;
}

}  // namespace lmbrain
