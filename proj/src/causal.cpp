#include "lmbrain/causal.hpp"

#include "lmbrain/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lmbrain {

const char* to_string(PartitionCriterion c) {
  switch (c) {
    case PartitionCriterion::in_degree: return "in_degree";
    case PartitionCriterion::out_degree: return "out_degree";
    case PartitionCriterion::time_constant: return "time_constant";
  }
  return "?";
}

const char* to_string(Integration i) { return i == Integration::low ? "low" : "high"; }

std::vector<Index> FeaturePartition::members(Integration which) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == which) out.push_back(static_cast<Index>(i));
  return out;
}

CausalityResult causality_matrix(std::span<const PerturbationRun> runs,
                                 const PcaModel<double>& source_pca,
                                 const PcaModel<double>& target_pca, Index tau_max) {
  if (runs.empty()) throw DimensionError("causality_matrix: no perturbation runs");
  if (tau_max < 0) throw RangeError("causality_matrix: negative tau_max");
  for (const auto& run : runs) {
    if (run.dx.rows() != run.dy.rows()) throw DimensionError("causality_matrix: dX/dY row mismatch");
    if (run.dx.cols() != source_pca.dim() || run.dy.cols() != target_pca.dim()) {
      throw DimensionError("causality_matrix: projection does not match activation width");
    }
    if (tau_max >= run.dx.rows()) {
      throw RangeError("causality_matrix: tau_max " + std::to_string(tau_max) + " >= T " +
                       std::to_string(run.dx.rows()));
    }
  }

  // Perturbations are differences, so projection skips the PCA mean.
  std::vector<Matrix> dxb(runs.size()), dyb(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    dxb[r] = runs[r].dx * source_pca.projection;
    dyb[r] = runs[r].dy * target_pca.projection;
  }

  const Index ks = source_pca.components();
  const Index kt = target_pca.components();
  const auto n_runs = static_cast<double>(runs.size());
  CausalityResult out;
  out.tau_max = tau_max;
  out.n_trials = static_cast<Index>(runs.size());
  out.per_tau.assign(static_cast<std::size_t>(tau_max + 1), Matrix::Zero(ks, kt));
  std::vector<Matrix> abs_mean(out.per_tau.size(), Matrix::Zero(ks, kt));

  parallel_for(out.per_tau.size(), [&](std::size_t tau_idx) {
    const auto tau = static_cast<Index>(tau_idx);
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const Index T = dxb[r].rows();
      const Matrix c = dxb[r].topRows(T - tau).transpose() * dyb[r].bottomRows(T - tau) /
                       static_cast<double>(T - tau);
      out.per_tau[tau_idx] += c / n_runs;
      abs_mean[tau_idx] += c.cwiseAbs() / n_runs;
    }
  });

  out.aggregate = Matrix::Zero(ks, kt);
  for (const auto& m : abs_mean) out.aggregate += m;
  return out;
}

CausalityResult causality_matrix(std::span<const PerturbationRun> runs, Index tau_max) {
  if (runs.empty()) throw DimensionError("causality_matrix: no perturbation runs");
  return causality_matrix(runs, PcaModel<double>::identity(runs.front().dx.cols()),
                          PcaModel<double>::identity(runs.front().dy.cols()), tau_max);
}

CausalGraph threshold_graph(const CausalityResult& result) {
  const Matrix& agg = result.aggregate;
  if (agg.size() == 0) throw DimensionError("threshold_graph: empty aggregate");
  std::vector<double> values(agg.data(), agg.data() + agg.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);

  CausalGraph g;
  g.threshold = median;
  g.adjacency = (agg.array() > median).cast<int>().matrix();
  g.in_degree = g.adjacency.colwise().sum().transpose();
  g.out_degree = g.adjacency.rowwise().sum();
  return g;
}

FeaturePartition rank_split(const Vector& scores, PartitionCriterion criterion) {
  const Index d = scores.size();
  if (d < 1) throw DimensionError("partition: no dimensions");
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });
  FeaturePartition p;
  p.criterion = criterion;
  p.scores = scores;
  p.labels.assign(static_cast<std::size_t>(d), Integration::high);
  const Index n_low = (d + 1) / 2;
  for (Index r = 0; r < n_low; ++r) p.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = Integration::low;
  return p;
}

FeaturePartition degree_partition(const CausalGraph& graph, DegreeDirection direction) {
  const auto& deg = direction == DegreeDirection::in ? graph.in_degree : graph.out_degree;
  return rank_split(deg.cast<double>(), direction == DegreeDirection::in
                                            ? PartitionCriterion::in_degree
                                            : PartitionCriterion::out_degree);
}

FeaturePartition timeconstant_partition(const TimeConstantTable& lambdas) {
  return rank_split(lambdas.lambdas(), PartitionCriterion::time_constant);
}

std::string edge_list_csv(const CausalGraph& graph, const Matrix& aggregate, const std::string& comment) {
  std::ostringstream os;
  os.precision(10);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "src,dst,weight\n";
  for (Index i = 0; i < graph.adjacency.rows(); ++i)
    for (Index j = 0; j < graph.adjacency.cols(); ++j)
      if (graph.adjacency(i, j)) os << i << ',' << j << ',' << aggregate(i, j) << '\n';
  return os.str();
}

std::string degree_summary_json(const CausalGraph& graph, const CausalityResult& result) {
  nlohmann::json j;
  j["threshold"] = graph.threshold;
  j["edge_count"] = graph.edge_count();
  j["n_source"] = graph.adjacency.rows();
  j["n_target"] = graph.adjacency.cols();
  j["tau_max"] = result.tau_max;
  j["n_trials"] = result.n_trials;
  j["in_degree"] = std::vector<int>(graph.in_degree.data(), graph.in_degree.data() + graph.in_degree.size());
  j["out_degree"] = std::vector<int>(graph.out_degree.data(), graph.out_degree.data() + graph.out_degree.size());
  return j.dump(2) + "\n";
}

std::string partition_csv(const FeaturePartition& p, const std::string& comment) {
  std::ostringstream os;
  os.precision(10);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "# criterion=" << to_string(p.criterion) << '\n';
  os << "dim,label,score\n";
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    os << i << ',' << to_string(p.labels[i]) << ',' << p.scores(static_cast<Index>(i)) << '\n';
  }
  return os.str();
}

FeaturePartition load_partition_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  FeaturePartition p;
  std::vector<double> scores;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.rfind("# criterion=", 0) == 0) {
      const auto name = line.substr(12);
      if (name == "in_degree") p.criterion = PartitionCriterion::in_degree;
      else if (name == "out_degree") p.criterion = PartitionCriterion::out_degree;
      else if (name == "time_constant") p.criterion = PartitionCriterion::time_constant;
      else throw FormatError("partition CSV: unknown criterion", at);
      continue;
    }
    if (line.empty() || line[0] == '#' || line.rfind("dim,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string dim, label, score;
    if (!std::getline(ls, dim, ',') || !std::getline(ls, label, ',') || !std::getline(ls, score)) {
      throw FormatError("partition CSV: expected dim,label,score", at);
    }
    long long dim_index = -1;
    double score_value = 0.0;
    try {
      dim_index = std::stoll(dim);
      score_value = std::stod(score);
    } catch (const std::exception&) {
      throw FormatError("partition CSV: non-numeric dim or score", at);
    }
    if (dim_index != static_cast<long long>(p.labels.size())) {
      throw FormatError("partition CSV: dims must be listed in order", at);
    }
    if (label == "low") p.labels.push_back(Integration::low);
    else if (label == "high") p.labels.push_back(Integration::high);
    else throw FormatError("partition CSV: label must be low or high", at);
    scores.push_back(score_value);
  }
  p.scores = Eigen::Map<Vector>(scores.data(), static_cast<Index>(scores.size()));
  return p;
}

}  // namespace lmbrain
