#include "lmbrain/synth.hpp"

#include "lmbrain/rng.hpp"

#include <cmath>

namespace lmbrain {

namespace {
constexpr std::uint64_t kFeatureStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kNoiseStream = 0xC2B2AE3D27D4EB4FULL;
constexpr std::uint64_t kLayoutStream = 0x165667B19E3779F9ULL;
}  // namespace

std::string roi_name(int roi_index) { return "roi" + std::to_string(roi_index); }

void SynthSpec::validate() const {
  if (n_tr < 2 || n_voxels < 1 || n_features < 1) throw ConfigError("synth: empty dimensions");
  if (!(tr_seconds > 0.0)) throw ConfigError("synth: tr_seconds must be positive");
  if (mixing.rows() != n_voxels || mixing.cols() != n_features) {
    throw ConfigError("synth: mixing must be n_voxels x n_features");
  }
  require_finite(mixing, "synth mixing");
  if (static_cast<Index>(hemo_lags.size()) != n_voxels || ar1_rho.size() != n_voxels) {
    throw ConfigError("synth: per-voxel parameter length mismatch");
  }
  for (int lag : hemo_lags) {
    if (lag < 3 || lag > 9) throw ConfigError("synth: hemodynamic lag outside [3, 9]");
    if (lag >= n_tr) throw ConfigError("synth: lag exceeds series length");
  }
  if ((ar1_rho.array() < 0.0).any() || (ar1_rho.array() >= 1.0).any()) {
    throw ConfigError("synth: ar1_rho must lie in [0, 1)");
  }
  if (feature_rho.size() != n_features || feature_scale.size() != n_features ||
      static_cast<Index>(feature_labels.size()) != n_features) {
    throw ConfigError("synth: per-feature parameter length mismatch");
  }
  if ((feature_rho.array() < 0.0).any() || (feature_rho.array() >= 1.0).any()) {
    throw ConfigError("synth: feature_rho must lie in [0, 1)");
  }
  if ((feature_scale.array() < 0.0).any()) throw ConfigError("synth: negative feature scale");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be nonnegative");
  if (!voxel_roi.empty()) {
    if (static_cast<Index>(voxel_roi.size()) != n_voxels) throw ConfigError("synth: voxel_roi length");
    for (int r : voxel_roi) {
      if (r >= static_cast<int>(roi_level.size())) throw ConfigError("synth: ROI index out of range");
    }
  }
}

SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  const Index T = spec.n_tr;
  const Index d = spec.n_features;
  const Index l = spec.n_voxels;

  Matrix features(T, d);
  Rng frng(spec.seed ^ kFeatureStream);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < d; ++j) {
      const double rho = spec.feature_rho(j);
      const double s = spec.feature_scale(j);
      const double e = frng.normal();
      features(t, j) = t == 0 ? s * e : rho * features(t - 1, j) + std::sqrt(1.0 - rho * rho) * s * e;
    }
  }

  // drive[t, v] = mixing[v, :] . f[t - lag_v, :]
  const Matrix mixed = features * spec.mixing.transpose();  // T x l, unlagged
  Matrix bold = Matrix::Zero(T, l);
  Rng nrng(spec.seed ^ kNoiseStream);
  for (Index t = 0; t < T; ++t) {
    for (Index v = 0; v < l; ++v) {
      const Index lag = spec.hemo_lags[static_cast<std::size_t>(v)];
      const double drive = t >= lag ? mixed(t - lag, v) : 0.0;
      const double prev = t > 0 ? bold(t - 1, v) : 0.0;
      bold(t, v) = spec.ar1_rho(v) * prev + drive + spec.noise_sigma * nrng.normal();
    }
  }

  SynthData out{std::move(features), BoldMatrix(std::move(bold), spec.tr_seconds), {}};
  out.truth = {spec.mixing,        spec.hemo_lags,  spec.ar1_rho,     spec.feature_rho,
               spec.feature_labels, spec.voxel_roi, spec.roi_level, spec.roi_language};
  return out;
}

SynthSpec planted_hierarchy_spec(const PlantedHierarchyOptions& opt) {
  if (opt.n_features < 2) throw ConfigError("planted spec: need at least 2 features");
  if (opt.n_rois < 1 || opt.n_voxels < opt.n_rois + opt.n_noise_rois) {
    throw ConfigError("planted spec: need at least one voxel per ROI");
  }
  Rng rng(opt.seed ^ kLayoutStream);

  SynthSpec spec;
  spec.n_tr = opt.n_tr;
  spec.n_voxels = opt.n_voxels;
  spec.n_features = opt.n_features;
  spec.seed = opt.seed;
  spec.noise_sigma = opt.noise_sigma;

  const Index d = opt.n_features;
  const Index n_low = (d + 1) / 2;
  spec.feature_rho.resize(d);
  spec.feature_scale.resize(d);
  spec.feature_labels.resize(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    const bool high = j >= n_low;
    spec.feature_rho(j) = high ? opt.slow_rho : opt.fast_rho;
    spec.feature_scale(j) = high ? 2.0 : 1.0;
    spec.feature_labels[static_cast<std::size_t>(j)] = high ? Integration::high : Integration::low;
  }

  const Index n_total_rois = opt.n_rois + opt.n_noise_rois;
  spec.roi_level.assign(static_cast<std::size_t>(n_total_rois), 0.0);
  spec.roi_language.assign(static_cast<std::size_t>(n_total_rois), false);
  auto level_order = rng.permutation(static_cast<std::size_t>(opt.n_rois));
  for (Index r = 0; r < opt.n_rois; ++r) {
    const double h = opt.n_rois == 1 ? 0.5
                                     : static_cast<double>(level_order[static_cast<std::size_t>(r)]) /
                                           static_cast<double>(opt.n_rois - 1);
    spec.roi_level[static_cast<std::size_t>(r)] = h;
    spec.roi_language[static_cast<std::size_t>(r)] = true;
  }

  // Round-robin voxels over ROIs, then shuffle the assignment.
  spec.voxel_roi.resize(static_cast<std::size_t>(opt.n_voxels));
  for (Index v = 0; v < opt.n_voxels; ++v) {
    spec.voxel_roi[static_cast<std::size_t>(v)] = static_cast<int>(v % n_total_rois);
  }
  rng.shuffle(std::span<int>(spec.voxel_roi));

  spec.mixing = Matrix::Zero(opt.n_voxels, d);
  spec.hemo_lags.resize(static_cast<std::size_t>(opt.n_voxels));
  spec.ar1_rho.resize(opt.n_voxels);
  for (Index v = 0; v < opt.n_voxels; ++v) {
    const auto r = static_cast<std::size_t>(spec.voxel_roi[static_cast<std::size_t>(v)]);
    spec.hemo_lags[static_cast<std::size_t>(v)] = 3 + static_cast<int>(rng.below(7));
    if (!spec.roi_language[r]) {
      spec.ar1_rho(v) = rng.uniform(0.1, 0.9);
      continue;
    }
    const double h = spec.roi_level[r];
    spec.ar1_rho(v) = std::clamp(0.2 + 0.7 * h + rng.uniform(-0.02, 0.02), 0.0, 0.98);
    Vector g(d);
    for (Index j = 0; j < d; ++j) g(j) = rng.normal();
    const double low_norm = g.head(n_low).norm();
    const double high_norm = g.tail(d - n_low).norm();
    for (Index j = 0; j < d; ++j) {
      const bool high = j >= n_low;
      const double share = high ? h : 1.0 - h;
      const double norm = high ? high_norm : low_norm;
      if (norm > 0.0) spec.mixing(v, j) = g(j) * std::sqrt(share) / norm / spec.feature_scale(j);
    }
  }
  return spec;
}

}  // namespace lmbrain
