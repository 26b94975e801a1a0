#pragma once

#include "lmbrain/causal.hpp"
#include "lmbrain/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lmbrain::cli {

struct SynthSection {
  Index n_tr = 2000;
  Index n_voxels = 200;
  Index n_features = 20;
  Index n_rois = 20;
  Index n_noise_rois = 0;
  double noise_sigma = 1.0;
  double fast_rho = 0.2;
  double slow_rho = 0.9;
  Index tokens_per_tr = 4;
};

struct ToyLmSection {
  bool planted = true;  // planted integration network instead of a random stack
  Index n_layers = 4;
  Index d_model = 32;
  Index n_heads = 4;
  Index d_ff = 64;
  Index vocab_size = 256;
  Index seq_len = 2000;
  double tokens_per_second = 2.5;
};

/// Effective run configuration: defaults, then the config file, then flags.
/// Paths are kept as written; resolution happens in `resolve`.
struct RunConfig {
  std::map<std::string, std::string> paths;  // input name -> path as written
  Index layer_src = 0;
  Index layer_tgt = 1;
  Index pca_k = 20;
  std::vector<int> fir_lags = {3, 4, 5, 6, 7, 8, 9};
  Index n_folds = 5;
  std::vector<double> alpha_grid;
  Index tau_max = 10;
  double sigma = 0.01;
  Index n_trials = 8;
  Index max_lag_tr = 10;
  Index max_lag_tokens = 50;
  double roi_threshold = 0.06;
  Index n_perm = 10000;
  Index n_shuffles = 50;
  Index causal_pca_k = 0;  // 0: causality in raw activation space
  double tr_seconds = 1.5;
  std::string partition = "in";
  std::uint64_t seed = 0;
  SynthSection synth;
  ToyLmSection toylm;

  // Directory that relative paths in the config file are resolved against.
  std::filesystem::path base_dir;

  RunConfig();

  PartitionCriterion criterion() const;
  Index max_fir_lag() const;
  nlohmann::json to_json() const;
  // FNV-1a 64 of the compact canonical JSON, as 16 hex digits.
  std::string hash() const;
};

// Recognised keys under "paths".
const std::vector<std::string>& path_keys();

// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);
void validate(const RunConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace lmbrain::cli
