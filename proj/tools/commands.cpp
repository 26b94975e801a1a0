#include "commands.hpp"

#include "run_config.hpp"

#include "lmbrain/align.hpp"
#include "lmbrain/causal.hpp"
#include "lmbrain/encoder.hpp"
#include "lmbrain/hierarchy.hpp"
#include "lmbrain/io.hpp"
#include "lmbrain/parallel.hpp"
#include "lmbrain/pca.hpp"
#include "lmbrain/rng.hpp"
#include "lmbrain/synth.hpp"
#include "lmbrain/temporal.hpp"
#include "lmbrain/toylm.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <thread>

namespace lmbrain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, std::string>& default_names() {
  static const std::map<std::string, std::string> names = {
      {"tokens", "tokens.hfm"},         {"timeline", "timeline.json"},
      {"aligned", "aligned.hfm"},       {"empty_trs", "empty_trs.csv"},
      {"features", "pca.hfm"},          {"bold", "bold.hfm"},
      {"rois", "rois.csv"},             {"runs", "runs"},
      {"activations", "."},             {"partition", "partition.csv"},
      {"degrees", "degrees.json"},      {"map_full", "map_full.csv"},
      {"map_diff", "map_diff.csv"},     {"voxel_lambdas", "voxel_lambdas.csv"},
      {"token_lambdas", "token_lambdas.csv"}};
  return names;
}

class Context {
 public:
  Context(RunConfig cfg, fs::path out_dir, std::string subcommand, bool partition_flag, bool shuffle)
      : cfg(std::move(cfg)),
        out_dir(std::move(out_dir)),
        subcommand(std::move(subcommand)),
        partition_flag(partition_flag),
        shuffle(shuffle),
        hash_(this->cfg.hash()) {}

  RunConfig cfg;
  fs::path out_dir;
  std::string subcommand;
  bool partition_flag;
  bool shuffle;

  // Config paths are relative to the config file; defaults live in out_dir.
  fs::path input(const std::string& key) const {
    const auto it = cfg.paths.find(key);
    if (it != cfg.paths.end()) {
      const fs::path p(it->second);
      return p.is_absolute() ? p : cfg.base_dir / p;
    }
    if (key == "token_features") return out_dir / ("layer_" + std::to_string(cfg.layer_tgt) + ".hfm");
    return out_dir / default_names().at(key);
  }

  bool has(const std::string& key) const { return fs::exists(input(key)); }

  fs::path require(const std::string& key) const {
    const fs::path p = input(key);
    if (!fs::exists(p)) throw MissingInput("missing input '" + key + "': " + p.string());
    return p;
  }

  std::string stamp() const { return "config=" + hash_ + " seed=" + std::to_string(cfg.seed); }

  json provenance() const {
    return {{"config_hash", hash_}, {"seed", cfg.seed}, {"subcommand", subcommand}};
  }

  void write_text(const std::string& name, const std::string& text) {
    const fs::path p = out_dir / name;
    fs::create_directories(p.parent_path());
    write_text_file(p, text);
    record(name, text);
  }

  void write_json(const std::string& name, json j) {
    j["provenance"] = provenance();
    write_text(name, j.dump(2) + "\n");
  }

  void write_matrix(const std::string& name, const Matrix& m) {
    const auto bytes = encode_hfm(m);
    const fs::path p = out_dir / name;
    fs::create_directories(p.parent_path());
    write_file_bytes(p, bytes);
    record(name, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }

  // Binary outputs cannot carry a header, so every run also leaves a
  // manifest with the provenance and a digest of each file it wrote.
  void write_manifest() {
    json j;
    j["outputs"] = outputs_;
    j["provenance"] = provenance();
    write_text_file(out_dir / (subcommand + ".manifest.json"), j.dump(2) + "\n");
  }

 private:
  void record(const std::string& name, std::string_view bytes) {
    outputs_.push_back({{"file", name}, {"bytes", bytes.size()}, {"fnv1a", hex64(fnv1a64(bytes))}});
  }

  std::string hash_;
  json outputs_ = json::array();
};

// ---------------------------------------------------------------- loaders

BoldMatrix load_bold(const Context& ctx) {
  return BoldMatrix(load_matrix(ctx.require("bold")), ctx.cfg.tr_seconds);
}

Matrix load_features(const Context& ctx, const BoldMatrix& bold) {
  Matrix x = load_matrix(ctx.require("features"));
  if (x.rows() != bold.n_tr()) {
    throw DimensionError("features have " + std::to_string(x.rows()) + " rows, BOLD has " +
                         std::to_string(bold.n_tr()));
  }
  return x;
}

// TRs that received no token; absent file means none.
std::vector<bool> load_score_mask(const Context& ctx, Index n_tr) {
  if (!ctx.has("empty_trs")) return {};
  std::vector<bool> mask(static_cast<std::size_t>(n_tr), false);
  std::ifstream in(ctx.input("empty_trs"));
  std::string line;
  std::uint64_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line == "tr") continue;
    }
    Index tr = 0;
    try {
      tr = std::stoll(line);
    } catch (const std::exception&) {
      throw FormatError("empty TR list: non-numeric row", at);
    }
    if (tr < 0 || tr >= n_tr) throw RangeError("empty TR list: index " + std::to_string(tr) + " out of range");
    mask[static_cast<std::size_t>(tr)] = true;
  }
  return mask;
}

TimeConstantTable load_time_constant_csv(const fs::path& path, double tr_seconds,
                                         std::vector<std::int64_t>* ids = nullptr) {
  const Matrix m = load_csv_matrix(path);
  TimeConstantTable t;
  if (m.cols() == 5) {
    t.unit = LagUnit::tr;
    t.seconds_per_lag = tr_seconds;
  } else if (m.cols() == 4) {
    t.unit = LagUnit::token;
  } else {
    throw FormatError("time constant CSV: expected 4 or 5 columns in " + path.string(), 0);
  }
  const Index res = m.cols() - 2;
  for (Index r = 0; r < m.rows(); ++r) {
    t.fits.push_back({m(r, 1), m(r, res), m(r, res + 1) != 0.0});
    if (ids) ids->push_back(static_cast<std::int64_t>(m(r, 0)));
  }
  return t;
}

json load_json_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

Eigen::VectorXi degrees_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw FormatError(std::string("degree file: missing ") + key, 0);
  const auto v = j[key].get<std::vector<int>>();
  return Eigen::Map<const Eigen::VectorXi>(v.data(), static_cast<Index>(v.size()));
}

FeaturePartition partition_from_degrees(const Context& ctx, PartitionCriterion crit) {
  const json j = load_json_file(ctx.require("degrees"));
  const Eigen::VectorXi deg = degrees_from_json(j, crit == PartitionCriterion::in_degree ? "in_degree" : "out_degree");
  return rank_split(deg.cast<double>(), crit);
}

FeaturePartition partition_from_time(const Context& ctx, const Matrix& features) {
  return timeconstant_partition(lm_feature_time_constants(features, ctx.cfg.max_lag_tokens));
}

EncodingConfig encoding_config(const RunConfig& c) {
  EncodingConfig e;
  e.n_folds = c.n_folds;
  e.alpha_grid = c.alpha_grid;
  e.guard_rows = c.max_fir_lag();
  return e;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json labels_json(const FeaturePartition& p) {
  json labels = json::array();
  for (auto l : p.labels) labels.push_back(to_string(l));
  return {{"criterion", to_string(p.criterion)}, {"labels", labels}, {"scores", vector_json(p.scores)}};
}

json fit_summary(const RidgeResult& r, Index n_regressors) {
  json alphas = json::array();
  for (Index f = 0; f < r.alpha_index.rows(); ++f) {
    json row = json::array();
    for (Index v = 0; v < r.alpha_index.cols(); ++v) row.push_back(r.alpha(f, v));
    alphas.push_back(row);
  }
  return {{"n_regressors", n_regressors},
          {"fold_starts", r.layout.starts},
          {"n_rows", r.layout.n_rows},
          {"mean_accuracy", r.mean_accuracy.size() ? r.mean_accuracy.mean() : 0.0},
          {"alphas", alphas}};
}

PartitionCriterion checked_partition(const Context& ctx, const FeaturePartition& p) {
  if (p.criterion != ctx.cfg.criterion()) {
    throw ConfigError(std::string("partition file criterion is ") + to_string(p.criterion) +
                      ", requested " + to_string(ctx.cfg.criterion()));
  }
  return p.criterion;
}

// ---------------------------------------------------------------- commands

void cmd_synth(Context& ctx) {
  const auto& s = ctx.cfg.synth;
  PlantedHierarchyOptions opt;
  opt.n_tr = s.n_tr;
  opt.n_voxels = s.n_voxels;
  opt.n_features = s.n_features;
  opt.n_rois = s.n_rois;
  opt.n_noise_rois = s.n_noise_rois;
  opt.noise_sigma = s.noise_sigma;
  opt.fast_rho = s.fast_rho;
  opt.slow_rho = s.slow_rho;
  opt.seed = ctx.cfg.seed;
  SynthSpec spec = planted_hierarchy_spec(opt);
  spec.tr_seconds = ctx.cfg.tr_seconds;
  const SynthData d = synth_generate(spec);

  // Token stream whose per-TR averages reproduce the TR features exactly:
  // jitter rows within a TR sum to zero.
  const Index k = s.tokens_per_tr;
  const Index n_tok = s.n_tr * k;
  Matrix tokens(n_tok, s.n_features);
  TokenTimeline tl;
  tl.tr_seconds = ctx.cfg.tr_seconds;
  tl.token_times.resize(static_cast<std::size_t>(n_tok));
  Rng rng(ctx.cfg.seed ^ 0x746f6b656e73ULL);
  for (Index t = 0; t < s.n_tr; ++t) {
    Vector sum = Vector::Zero(s.n_features);
    for (Index i = 0; i < k; ++i) {
      Vector jitter(s.n_features);
      if (i + 1 < k) {
        for (Index c = 0; c < s.n_features; ++c) jitter(c) = 0.5 * rng.normal();
        sum += jitter;
      } else {
        jitter = -sum;
      }
      tokens.row(t * k + i) = d.features.row(t) + jitter.transpose();
      tl.token_times[static_cast<std::size_t>(t * k + i)] =
          (static_cast<double>(t) + (static_cast<double>(i) + 0.5) / static_cast<double>(k)) * tl.tr_seconds;
    }
  }

  std::vector<RoiLabel> labels;
  for (Index v = 0; v < s.n_voxels; ++v) {
    const int r = d.truth.voxel_roi[static_cast<std::size_t>(v)];
    if (r >= 0) labels.push_back({v, roi_name(r)});
  }
  std::ostringstream rois;
  rois << "# " << ctx.stamp() << "\nvoxel_index,roi_label\n";
  for (const auto& l : labels) rois << l.voxel_index << ',' << l.roi << '\n';

  json truth;
  json feature_labels = json::array();
  for (auto l : d.truth.feature_labels) feature_labels.push_back(to_string(l));
  truth["feature_labels"] = feature_labels;
  truth["feature_rho"] = vector_json(d.truth.feature_rho);
  truth["hemo_lags"] = d.truth.hemo_lags;
  truth["ar1_rho"] = vector_json(d.truth.ar1_rho);
  json roi_truth = json::array();
  for (std::size_t r = 0; r < d.truth.roi_level.size(); ++r) {
    roi_truth.push_back({{"roi", roi_name(static_cast<int>(r))},
                         {"level", d.truth.roi_level[r]},
                         {"language", static_cast<bool>(d.truth.roi_language[r])}});
  }
  truth["rois"] = roi_truth;

  ctx.write_matrix("tokens.hfm", tokens);
  ctx.write_text("timeline.json", timeline_to_json(tl));
  ctx.write_matrix("features_tr.hfm", d.features);
  ctx.write_matrix("bold.hfm", d.bold.data);
  ctx.write_text("rois.csv", rois.str());
  ctx.write_json("truth.json", truth);
}

void cmd_align(Context& ctx) {
  const Matrix tokens = load_matrix(ctx.require("tokens"));
  const TokenTimeline tl = load_timeline(ctx.require("timeline"));
  Index n_tr = 0;
  if (ctx.has("bold")) {
    n_tr = load_matrix(ctx.input("bold")).rows();
  } else if (!tl.token_times.empty()) {
    n_tr = static_cast<Index>(std::floor(tl.token_times.back() / tl.tr_seconds)) + 1;
  }
  const AlignedFeatures a = align_tokens_to_tr(tokens, tl, n_tr);
  std::ostringstream empty;
  empty << "# " << ctx.stamp() << "\ntr\n";
  for (std::size_t t = 0; t < a.empty.size(); ++t)
    if (a.empty[t]) empty << t << '\n';
  ctx.write_matrix("aligned.hfm", a.features);
  ctx.write_text("empty_trs.csv", empty.str());
}

void cmd_pca(Context& ctx) {
  const Matrix x = load_matrix(ctx.require("aligned"));
  const auto model = pca_fit(x, ctx.cfg.pca_k);
  json proj = json::array();
  for (Index r = 0; r < model.projection.rows(); ++r) proj.push_back(vector_json(model.projection.row(r).transpose()));
  json j;
  j["dim"] = model.dim();
  j["components"] = model.components();
  j["mean"] = vector_json(model.mean);
  j["explained_variance"] = vector_json(model.explained_variance);
  j["projection"] = proj;
  ctx.write_matrix("pca.hfm", pca_transform(model, x));
  ctx.write_json("pca_model.json", j);
}

void cmd_null(Context& ctx) {
  const BoldMatrix bold = load_bold(ctx);
  const Matrix x = load_features(ctx, bold);
  const auto mask = load_score_mask(ctx, bold.n_tr());
  const EncodingConfig ecfg = encoding_config(ctx.cfg);
  const auto& lags = ctx.cfg.fir_lags;

  std::optional<FeaturePartition> part;
  double observed = 0.0;
  if (ctx.partition_flag) {
    part = load_partition_csv(ctx.require("partition"));
    checked_partition(ctx, *part);
    const auto hi = fit_encoding(select_and_expand(x, part->members(Integration::high), lags), bold, ecfg, mask);
    const auto lo = fit_encoding(select_and_expand(x, part->members(Integration::low), lags), bold, ecfg, mask);
    observed = (hi.mean_accuracy - lo.mean_accuracy).mean();
  } else {
    observed = fit_encoding(fir_expand(x, lags), bold, ecfg, mask).mean_accuracy.mean();
  }
  const NullMode mode = part ? NullMode::difference : NullMode::single;
  const NullStats n = shuffle_null(x, bold, ecfg, lags, ctx.cfg.n_shuffles, ctx.cfg.seed, mode,
                                   part ? &*part : nullptr, mask);
  const double se = n.std / std::sqrt(static_cast<double>(n.samples.size()));
  json j;
  j["mode"] = mode == NullMode::single ? "single" : "difference";
  j["n_shuffles"] = n.samples.size();
  j["samples"] = n.samples;
  j["mean"] = n.mean;
  j["std"] = n.std;
  j["standard_error"] = se;
  j["voxel_std"] = n.voxel_std;
  j["reference_std"] = n.reference_std;
  j["observed_mean"] = observed;
  j["observed_z"] = n.std > 0.0 ? (observed - n.mean) / n.std : 0.0;
  ctx.write_json("null.json", j);
}

void cmd_fit(Context& ctx) {
  if (ctx.shuffle) return cmd_null(ctx);
  const BoldMatrix bold = load_bold(ctx);
  const Matrix x = load_features(ctx, bold);
  const auto mask = load_score_mask(ctx, bold.n_tr());
  const EncodingConfig ecfg = encoding_config(ctx.cfg);
  const auto& lags = ctx.cfg.fir_lags;

  const Matrix design = fir_expand(x, lags);
  const auto full = fit_encoding(design, bold, ecfg, mask);
  const auto full_map = accuracy_map(full, bold, {"full", ctx.cfg.layer_tgt, "", {}});
  json j;
  j["alpha_grid"] = ctx.cfg.alpha_grid;
  j["fir_lags"] = lags;
  j["full"] = fit_summary(full, design.cols());
  ctx.write_text("map_full.csv", accuracy_map_csv(full_map, ctx.stamp()));

  if (ctx.partition_flag) {
    const FeaturePartition part = load_partition_csv(ctx.require("partition"));
    const std::string crit = to_string(checked_partition(ctx, part));
    auto fit_half = [&](Integration which, const char* tag) {
      const Matrix xs = select_and_expand(x, part.members(which), lags);
      const auto r = fit_encoding(xs, bold, ecfg, mask);
      j[tag] = fit_summary(r, xs.cols());
      return accuracy_map(r, bold, {std::string("partition:") + tag, ctx.cfg.layer_tgt, crit, {"partition.csv"}});
    };
    const auto hi = fit_half(Integration::high, "high");
    const auto lo = fit_half(Integration::low, "low");
    const auto diff = diff_map(hi, lo);
    j["diff_mean"] = diff.values.mean();
    ctx.write_text("map_high.csv", accuracy_map_csv(hi, ctx.stamp()));
    ctx.write_text("map_low.csv", accuracy_map_csv(lo, ctx.stamp()));
    ctx.write_text("map_diff.csv", accuracy_map_csv(diff, ctx.stamp()));
  }
  ctx.write_json("fit.json", j);
}

void cmd_toylm(Context& ctx) {
  const auto& t = ctx.cfg.toylm;
  ToyLmWeights w;
  json truth;
  if (t.planted) {
    PlantedLmOptions opt;
    opt.max_seq = t.seq_len;
    opt.seed = ctx.cfg.seed;
    const PlantedLm lm = planted_integration_lm(opt);
    w = lm.weights;
    json labels = json::array();
    for (bool h : lm.high_target) labels.push_back(h ? "high" : "low");
    truth["target_labels"] = labels;
  } else {
    ToyLmConfig c;
    c.n_layers = t.n_layers;
    c.d_model = t.d_model;
    c.n_heads = t.n_heads;
    c.d_ff = t.d_ff;
    c.vocab_size = t.vocab_size;
    c.max_seq = t.seq_len;
    c.seed = ctx.cfg.seed;
    w = toylm_init(c);
  }
  const Index src = ctx.cfg.layer_src;
  const Index tgt = ctx.cfg.layer_tgt;
  if (tgt > w.config.n_layers) {
    throw RangeError("layer_tgt " + std::to_string(tgt) + " exceeds " + std::to_string(w.config.n_layers) + " layers");
  }
  const auto tokens = random_tokens(t.seq_len, w.config.vocab_size, ctx.cfg.seed + 1);
  const auto acts = toylm_forward(w, tokens);

  TokenTimeline tl;
  tl.tr_seconds = ctx.cfg.tr_seconds;
  for (Index i = 0; i < t.seq_len; ++i) tl.token_times.push_back(static_cast<double>(i) / t.tokens_per_second);

  std::vector<PerturbationRun> runs(static_cast<std::size_t>(ctx.cfg.n_trials));
  parallel_for(runs.size(), [&](std::size_t k) {
    runs[k] = perturbation_pair(w, tokens, src, tgt, ctx.cfg.sigma, ctx.cfg.seed + k, static_cast<Index>(k));
  });

  for (std::size_t l = 0; l < acts.size(); ++l) ctx.write_matrix("layer_" + std::to_string(l) + ".hfm", acts[l]);
  ctx.write_text("timeline.json", timeline_to_json(tl));
  for (const auto& r : runs) {
    const std::string stem = "runs/src" + std::to_string(src) + "_tgt" + std::to_string(tgt) + "_trial" +
                             std::to_string(r.trial);
    ctx.write_matrix(stem + ".dx.hfm", r.dx);
    ctx.write_matrix(stem + ".dy.hfm", r.dy);
    ctx.write_text(stem + ".meta.json", perturbation_meta_json(r));
  }
  truth["n_layers"] = w.config.n_layers;
  truth["d_model"] = w.config.d_model;
  truth["tokens"] = tokens;
  ctx.write_json("toylm.json", truth);
}

void cmd_causal(Context& ctx) {
  const fs::path dir = ctx.require("runs");
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const std::string suffix = ".meta.json";
    if (name.size() > suffix.size() && name.ends_with(suffix)) stems.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(stems.begin(), stems.end());
  std::vector<PerturbationRun> runs;
  for (const auto& s : stems) {
    auto r = import_perturbation_run(dir / (s + ".dx.hfm"), dir / (s + ".dy.hfm"), dir / (s + ".meta.json"));
    if (r.source_layer == ctx.cfg.layer_src && r.target_layer == ctx.cfg.layer_tgt) runs.push_back(std::move(r));
  }
  if (runs.empty()) {
    throw ConfigError("no perturbation runs for layers " + std::to_string(ctx.cfg.layer_src) + " -> " +
                      std::to_string(ctx.cfg.layer_tgt) + " in " + dir.string());
  }

  CausalityResult res;
  if (ctx.cfg.causal_pca_k > 0) {
    const fs::path act = ctx.require("activations");
    auto layer = [&](Index l) {
      const fs::path p = act / ("layer_" + std::to_string(l) + ".hfm");
      if (!fs::exists(p)) throw MissingInput("missing activations: " + p.string());
      return pca_fit(load_matrix(p), ctx.cfg.causal_pca_k);
    };
    res = causality_matrix(runs, layer(ctx.cfg.layer_src), layer(ctx.cfg.layer_tgt), ctx.cfg.tau_max);
  } else {
    res = causality_matrix(runs, ctx.cfg.tau_max);
  }
  const CausalGraph g = threshold_graph(res);

  std::ostringstream agg;
  agg.precision(17);
  agg << "# " << ctx.stamp() << "\n# rows=source cols=target\n";
  for (Index i = 0; i < res.aggregate.rows(); ++i) {
    for (Index c = 0; c < res.aggregate.cols(); ++c) agg << (c ? "," : "") << res.aggregate(i, c);
    agg << '\n';
  }
  json deg = json::parse(degree_summary_json(g, res));
  deg["layer_src"] = ctx.cfg.layer_src;
  deg["layer_tgt"] = ctx.cfg.layer_tgt;
  deg["pca_k"] = ctx.cfg.causal_pca_k;
  deg["n_runs"] = runs.size();
  ctx.write_text("causality.csv", agg.str());
  ctx.write_text("edges.csv", edge_list_csv(g, res.aggregate, ctx.stamp()));
  ctx.write_json("degrees.json", deg);
}

void cmd_partition(Context& ctx) {
  const PartitionCriterion crit = ctx.cfg.criterion();
  const FeaturePartition p = crit == PartitionCriterion::time_constant
                                 ? partition_from_time(ctx, load_matrix(ctx.require("features")))
                                 : partition_from_degrees(ctx, crit);
  ctx.write_text("partition.csv", partition_csv(p, ctx.stamp()));
}

void cmd_timeconst(Context& ctx) {
  const bool voxels = ctx.has("bold");
  const bool tokens = ctx.has("token_features");
  if (!voxels && !tokens) throw MissingInput("timeconst: neither BOLD nor token features found");
  if (voxels) {
    const BoldMatrix bold = load_bold(ctx);
    const auto t = time_constant_map(bold, ctx.cfg.max_lag_tr);
    ctx.write_text("voxel_lambdas.csv", time_constant_csv(t, bold.voxel_ids, ctx.stamp()));
    ctx.write_text("voxel_lambdas_display.csv",
                   time_constant_display_csv(t, bold.voxel_ids, ctx.cfg.tr_seconds, ctx.stamp()));
  }
  if (tokens) {
    const auto t = lm_feature_time_constants(load_matrix(ctx.input("token_features")), ctx.cfg.max_lag_tokens);
    ctx.write_text("token_lambdas.csv", time_constant_csv(t, {}, ctx.stamp()));
  }
}

void cmd_rank(Context& ctx) {
  const bool hierarchy = ctx.has("map_full") && ctx.has("map_diff") && ctx.has("voxel_lambdas") && ctx.has("rois");
  const bool degree = ctx.has("degrees") && ctx.has("token_lambdas");
  if (!hierarchy && !degree) throw MissingInput("rank: need maps, voxel lambdas and ROIs, or degrees and token lambdas");
  const auto n_perm = static_cast<std::size_t>(ctx.cfg.n_perm);
  if (hierarchy) {
    const AccuracyMap full = load_accuracy_map_csv(ctx.input("map_full"));
    const AccuracyMap diff = load_accuracy_map_csv(ctx.input("map_diff"));
    std::vector<std::int64_t> ids;
    const auto table = load_time_constant_csv(ctx.input("voxel_lambdas"), ctx.cfg.tr_seconds, &ids);
    if (ids != full.voxel_ids) throw DimensionError("voxel lambdas and accuracy map list different voxels");
    const RoiTable rois(load_roi_labels(ctx.input("rois")), full.voxel_ids);
    const auto rep = build_hierarchy_report(full, diff, table, rois, ctx.cfg.roi_threshold, n_perm, ctx.cfg.seed);
    ctx.write_json("hierarchy.json", to_json(rep));
    ctx.write_text("scatter.csv", scatter_csv(rep, ctx.stamp()));
  }
  if (degree) {
    const json dj = load_json_file(ctx.input("degrees"));
    const auto table = load_time_constant_csv(ctx.input("token_lambdas"), 0.0);
    const auto r = degree_vs_lambda(degrees_from_json(dj, "in_degree"), table, n_perm, ctx.cfg.seed);
    json j;
    j["spearman"] = to_json(r.stats);
    j["dims_used"] = r.dims_used;
    j["n_perm"] = n_perm;
    ctx.write_json("degree_lambda.json", j);
  }
}

void cmd_report(Context& ctx) {
  const BoldMatrix bold = load_bold(ctx);
  const Matrix x = load_features(ctx, bold);
  const auto mask = load_score_mask(ctx, bold.n_tr());
  const EncodingConfig ecfg = encoding_config(ctx.cfg);
  const auto& lags = ctx.cfg.fir_lags;
  const RoiTable rois(load_roi_labels(ctx.require("rois")), bold.voxel_ids);

  const PartitionCriterion crit = ctx.cfg.criterion();
  const FeaturePartition part =
      crit == PartitionCriterion::time_constant ? partition_from_time(ctx, x) : partition_from_degrees(ctx, crit);
  if (static_cast<Index>(part.labels.size()) != x.cols()) {
    throw DimensionError("partition covers " + std::to_string(part.labels.size()) + " dims, features have " +
                         std::to_string(x.cols()));
  }

  const auto map_of = [&](const Matrix& design, const std::string& tag) {
    return accuracy_map(fit_encoding(design, bold, ecfg, mask), bold, {tag, ctx.cfg.layer_tgt, to_string(crit), {}});
  };
  const auto full = map_of(fir_expand(x, lags), "full");
  const auto hi = map_of(select_and_expand(x, part.members(Integration::high), lags), "partition:high");
  const auto lo = map_of(select_and_expand(x, part.members(Integration::low), lags), "partition:low");
  const auto diff = diff_map(hi, lo);
  const auto lambdas = time_constant_map(bold, ctx.cfg.max_lag_tr);
  const auto rep = build_hierarchy_report(full, diff, lambdas, rois, ctx.cfg.roi_threshold,
                                          static_cast<std::size_t>(ctx.cfg.n_perm), ctx.cfg.seed);

  auto map_json = [](const AccuracyMap& m) {
    return json{{"mean", m.values.mean()}, {"provenance", m.provenance.describe()}, {"values", vector_json(m.values)}};
  };
  json j;
  j["config"] = ctx.cfg.to_json();
  j["voxel_ids"] = bold.voxel_ids;
  j["partition"] = labels_json(part);
  j["maps"] = {{"full", map_json(full)}, {"high", map_json(hi)}, {"low", map_json(lo)}, {"diff", map_json(diff)}};
  json flags = json::array();
  for (bool f : lambdas.flags()) flags.push_back(f);
  j["voxel_lambda_seconds"] = vector_json(lambdas.lambda_seconds());
  j["voxel_lambda_flags"] = flags;
  j["hierarchy"] = to_json(rep);
  ctx.write_json("report.json", j);
  ctx.write_text("scatter.csv", scatter_csv(rep, ctx.stamp()));
}

void report_error(std::ostream& err, const ErrorClass& e, const std::string& sub, const std::string& msg) {
  json j{{"error", e.kind}, {"exit_code", e.exit_code}, {"subcommand", sub}, {"message", msg}};
  err << j.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Language-model-to-brain encoding and integration hierarchy pipeline", "lmbrain"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out_dir = ".";
  std::optional<Index> layer_src, layer_tgt;
  std::optional<std::string> partition;
  bool shuffle = false;

  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--threads", threads, "Worker cap; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "Output directory (also holds default inputs)");
  app.add_option("--layer-src", layer_src, "Source layer")->check(CLI::NonNegativeNumber);
  app.add_option("--layer-tgt", layer_tgt, "Target layer")->check(CLI::NonNegativeNumber);
  app.add_option("--partition", partition, "Feature partition criterion")->check(CLI::IsMember({"in", "out", "time"}));
  app.add_flag("--shuffle", shuffle, "fit: time-shuffle null instead of a fit");

  const std::vector<std::pair<const char*, const char*>> subs = {
      {"synth", "Planted-hierarchy synthetic dataset"},
      {"align", "Average token features into TR bins"},
      {"pca", "Reduce aligned features to pca_k components"},
      {"fit", "Nested-CV ridge encoding maps"},
      {"causal", "Perturbation causality graph and degrees"},
      {"partition", "Split feature dims into low/high integration"},
      {"timeconst", "Autocorrelation time constants"},
      {"rank", "Rank correlations against time constants"},
      {"null", "Time-shuffle null distribution"},
      {"toylm", "Toy LM activations and perturbation runs"},
      {"report", "Full encoding-to-hierarchy pipeline in one JSON"}};
  for (const auto& [name, desc] : subs) app.add_subcommand(name, desc)->fallthrough();

  std::string sub;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    sub = app.get_subcommands().front()->get_name();
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, {"UsageError", kExitValidation}, "", e.what());
    return kExitValidation;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (config_path.empty()) cfg.base_dir = fs::current_path();
    if (seed) cfg.seed = *seed;
    if (layer_src) cfg.layer_src = *layer_src;
    if (layer_tgt) cfg.layer_tgt = *layer_tgt;
    if (partition) cfg.partition = *partition;
    validate(cfg);
    set_num_threads(threads);
    fs::create_directories(out_dir);

    Context ctx(std::move(cfg), out_dir, sub, partition.has_value(), shuffle);
    static const std::map<std::string, std::function<void(Context&)>> table = {
        {"synth", cmd_synth},         {"align", cmd_align},     {"pca", cmd_pca},
        {"fit", cmd_fit},             {"causal", cmd_causal},   {"partition", cmd_partition},
        {"timeconst", cmd_timeconst}, {"rank", cmd_rank},       {"null", cmd_null},
        {"toylm", cmd_toylm},         {"report", cmd_report}};
    table.at(sub)(ctx);
    ctx.write_manifest();
    out << "{\"subcommand\":\"" << sub << "\",\"config_hash\":\"" << ctx.cfg.hash() << "\",\"status\":\"ok\"}\n";
    return kExitOk;
  } catch (const std::exception& e) {
    const ErrorClass c = classify_error(e);
    report_error(err, c, sub, e.what());
    return c.exit_code;
  }
}

ErrorClass classify_error(const std::exception& e) {
  if (dynamic_cast<const MissingInput*>(&e)) return {"MissingInput", kExitValidation};
  if (dynamic_cast<const ConfigError*>(&e)) return {"ConfigError", kExitValidation};
  if (dynamic_cast<const FormatError*>(&e)) return {"FormatError", kExitValidation};
  if (dynamic_cast<const DimensionError*>(&e)) return {"DimensionError", kExitValidation};
  if (dynamic_cast<const RangeError*>(&e)) return {"RangeError", kExitValidation};
  if (dynamic_cast<const SingularError*>(&e)) return {"SingularError", kExitNumeric};
  if (dynamic_cast<const FitError*>(&e)) return {"FitError", kExitNumeric};
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return {"FormatError", kExitValidation};
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return {"IoError", kExitValidation};
  return {"InternalError", kExitInternal};
}

}  // namespace lmbrain::cli
