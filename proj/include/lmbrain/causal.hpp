#pragma once

#include "lmbrain/pca.hpp"
#include "lmbrain/synth.hpp"
#include "lmbrain/temporal.hpp"
#include "lmbrain/toylm.hpp"
#include "lmbrain/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace lmbrain {

/// Time-shifted cross-covariances between source perturbations and target
/// responses. Orientation: rows = source dims, columns = target dims, so
///   C_tau[i, j] = sum_t dXbar[t - tau, i] dYbar[t, j] / (T - tau).
struct CausalityResult {
  std::vector<Matrix> per_tau;  // signed, averaged over trials; tau = 0..tau_max
  Matrix aggregate;             // sum over tau of the trial-mean |C_tau|
  Index tau_max = 0;
  Index n_trials = 0;
};

using Adjacency = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct CausalGraph {
  Adjacency adjacency;  // d_src x d_tgt, 0/1
  double threshold = 0.0;
  Eigen::VectorXi in_degree;   // per target dim
  Eigen::VectorXi out_degree;  // per source dim

  Index edge_count() const { return adjacency.sum(); }
};

enum class PartitionCriterion { in_degree, out_degree, time_constant };

struct FeaturePartition {
  std::vector<Integration> labels;
  PartitionCriterion criterion = PartitionCriterion::in_degree;
  Vector scores;  // degree or lambda per dim

  std::vector<Index> members(Integration which) const;
};

inline constexpr Index kDefaultTauMax = 10;

CausalityResult causality_matrix(std::span<const PerturbationRun> runs,
                                 const PcaModel<double>& source_pca,
                                 const PcaModel<double>& target_pca, Index tau_max = kDefaultTauMax);

// Raw activation space (identity projections).
CausalityResult causality_matrix(std::span<const PerturbationRun> runs, Index tau_max = kDefaultTauMax);

// Edge iff aggregate entry is strictly above the median of all entries.
CausalGraph threshold_graph(const CausalityResult& result);

enum class DegreeDirection { in, out };

/// Lower ceil(d/2) dims by degree become low, the rest high. Ties broken by
/// dimension index.
FeaturePartition degree_partition(const CausalGraph& graph, DegreeDirection direction);

// Median split on lambda: fast half low, slow half high; same tie rule.
FeaturePartition timeconstant_partition(const TimeConstantTable& lambdas);

FeaturePartition rank_split(const Vector& scores, PartitionCriterion criterion);

std::string edge_list_csv(const CausalGraph& graph, const Matrix& aggregate, const std::string& comment = {});
std::string degree_summary_json(const CausalGraph& graph, const CausalityResult& result);
std::string partition_csv(const FeaturePartition& p, const std::string& comment = {});
FeaturePartition load_partition_csv(const std::filesystem::path& path);

const char* to_string(PartitionCriterion c);
const char* to_string(Integration i);

}  // namespace lmbrain
