#pragma once

#include "lmbrain/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lmbrain {

enum class Activation { gelu, identity };

struct ToyLmConfig {
  Index n_layers = 6;
  Index d_model = 64;
  Index n_heads = 4;
  Index d_ff = 256;
  Index vocab_size = 256;
  Index max_seq = 128;
  std::uint64_t seed = 0;

  // Structural switches, used to build analytically tractable test networks.
  bool use_layernorm = true;
  bool use_attention = true;
  bool use_mlp = true;
  Activation activation = Activation::gelu;

  Index head_dim() const { return d_model / n_heads; }
  void validate() const;
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;              // d_model x d_model; head h owns columns [h*hd, (h+1)*hd)
  std::vector<double> alibi_slopes;  // per head; score penalty slope * (t - s)
};

struct MlpWeights {
  Matrix w1;  // d_model x d_ff
  Vector b1;
  Matrix w2;  // d_ff x d_model
  Vector b2;
};

struct BlockWeights {
  Vector ln1_gain, ln1_bias;
  AttentionWeights attn;
  Vector ln2_gain, ln2_bias;
  MlpWeights mlp;
};

/// Decoder-only pre-norm transformer. Position enters only through causal
/// ALiBi-style distance penalties, so there is no positional embedding table.
struct ToyLmWeights {
  ToyLmConfig config;
  Matrix token_embedding;  // vocab_size x d_model
  std::vector<BlockWeights> blocks;
};

// Seeded N(0, 1/d_model) weights; gains 1, biases 0; geometric ALiBi slopes.
ToyLmWeights toylm_init(const ToyLmConfig& cfg);

// Layer 0 is the embedding output, layer i the output of block i.
using LayerActivations = std::vector<Matrix>;

LayerActivations toylm_forward(const ToyLmWeights& w, std::span<const int> tokens);

// Runs blocks source_layer+1 .. n_layers on a given layer-source activation.
// Returns n_layers - source_layer + 1 matrices, starting with `x` itself.
LayerActivations toylm_forward_from(const ToyLmWeights& w, Index source_layer, const Matrix& x);

struct PerturbationRun {
  Matrix dx;  // T x d at source layer
  Matrix dy;  // T x d at target layer
  double sigma = 0.0;
  std::uint64_t trial_seed = 0;
  Index source_layer = 0;
  Index target_layer = 0;
  Index trial = 0;
};

double rms(const Matrix& x);

/// One trial: dX ~ N(0, (sigma * RMS(X_source))^2) i.i.d. per entry is added
/// at the source layer and the pass resumes; dY = perturbed - clean at the
/// target. target_layer == source_layer gives dY = dX.
PerturbationRun perturbation_pair(const ToyLmWeights& w, std::span<const int> tokens,
                                  Index source_layer, Index target_layer, double sigma,
                                  std::uint64_t trial_seed, Index trial = 0);

/// All trials (seed + trial) times all target layers above the source,
/// ordered trial-major.
std::vector<PerturbationRun> perturbed_forward(const ToyLmWeights& w, std::span<const int> tokens,
                                               Index source_layer, double sigma, Index n_trials,
                                               std::uint64_t seed);

// Exporter file convention: <stem>.dx.hfm, <stem>.dy.hfm, <stem>.meta.json
void export_perturbation_run(const PerturbationRun& run, const std::filesystem::path& dir,
                             const std::string& stem);
PerturbationRun import_perturbation_run(const std::filesystem::path& dx_path,
                                        const std::filesystem::path& dy_path,
                                        const std::filesystem::path& meta_path);
std::string perturbation_meta_json(const PerturbationRun& run);

std::vector<int> random_tokens(Index length, Index vocab_size, std::uint64_t seed);

/// Network with a planted cross-layer integration structure.
///
/// Source dims form n_blocks blocks of block_size. A single attention block
/// (queries and keys zero, so scores are pure distance penalties) writes the
/// target: head 0 ("low" dims) reads one source block per target dim through
/// a steep penalty, head 1 ("high" dims) reads high_fan_in blocks through a
/// shallow penalty, i.e. a long running average. MLP disabled.
struct PlantedLmOptions {
  Index n_blocks = 5;
  Index block_size = 4;
  Index high_fan_in = 4;
  double fast_slope = 1.5;
  double slow_slope = 0.15;
  Index max_seq = 4096;
  std::uint64_t seed = 0;
};

struct PlantedLm {
  ToyLmWeights weights;
  std::vector<bool> high_target;  // planted label per target dim
};

PlantedLm planted_integration_lm(const PlantedLmOptions& opt);

}  // namespace lmbrain
