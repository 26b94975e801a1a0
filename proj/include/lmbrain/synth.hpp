#pragma once

#include "lmbrain/align.hpp"
#include "lmbrain/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lmbrain {

enum class Integration { low, high };

/// Fully explicit generator description. Features follow per-dimension
/// stationary AR(1) processes; each voxel integrates a lagged mixture of
/// features through its own AR(1) recursion with Gaussian innovation noise:
///
///   f[t, j] = feature_rho[j] f[t-1, j] + sqrt(1 - feature_rho[j]^2) feature_scale[j] e
///   b[t, v] = ar1_rho[v] b[t-1, v] + sum_j mixing[v, j] f[t - lag_v, j] + noise_sigma e
struct SynthSpec {
  Index n_tr = 0;
  Index n_voxels = 0;
  Index n_features = 0;
  std::uint64_t seed = 0;
  double tr_seconds = 1.5;

  Matrix mixing;               // n_voxels x n_features
  std::vector<int> hemo_lags;  // per voxel, TRs in [3, 9]
  Vector ar1_rho;              // per voxel, [0, 1)
  double noise_sigma = 0.0;

  Vector feature_rho;    // per feature, [0, 1)
  Vector feature_scale;  // per feature, stationary std
  std::vector<Integration> feature_labels;

  // Optional planted ROI layout (empty when unused).
  std::vector<int> voxel_roi;       // -1 for unassigned
  std::vector<double> roi_level;    // planted hierarchy level in [0, 1]
  std::vector<bool> roi_language;   // false for noise ROIs

  void validate() const;
};

struct SynthTruth {
  Matrix mixing;
  std::vector<int> hemo_lags;
  Vector ar1_rho;
  Vector feature_rho;
  std::vector<Integration> feature_labels;
  std::vector<int> voxel_roi;
  std::vector<double> roi_level;
  std::vector<bool> roi_language;
};

struct SynthData {
  Matrix features;  // n_tr x n_features
  BoldMatrix bold;
  SynthTruth truth;
};

SynthData synth_generate(const SynthSpec& spec);

struct PlantedHierarchyOptions {
  Index n_tr = 2000;
  Index n_voxels = 200;
  Index n_features = 20;
  Index n_rois = 20;        // language ROIs
  Index n_noise_rois = 0;   // ROIs with no stimulus drive
  double noise_sigma = 1.0;
  double fast_rho = 0.2;    // low-integration features
  double slow_rho = 0.9;    // high-integration features
  std::uint64_t seed = 0;
};

/// Planted hierarchy: each language ROI gets a level h in [0, 1] (evenly
/// spaced, randomly assigned). Its voxels draw a fraction h of their signal
/// variance from the slow/high-integration feature half and 1-h from the
/// fast/low half, and integrate with ar1_rho = 0.2 + 0.7 h. Slow features
/// carry twice the amplitude of fast ones so that PCA keeps the two halves in
/// separate subspaces.
SynthSpec planted_hierarchy_spec(const PlantedHierarchyOptions& opt);

std::string roi_name(int roi_index);

}  // namespace lmbrain
