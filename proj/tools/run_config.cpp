#include "run_config.hpp"

#include "lmbrain/encoder.hpp"
#include "lmbrain/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

namespace lmbrain::cli {

using nlohmann::json;

namespace {

const char* type_name(const json& v) { return v.type_name(); }

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config: " + key + ": " + why);
}

Index get_index(const json& v, const std::string& key) {
  if (!v.is_number_integer()) bad(key, std::string("expected integer, got ") + type_name(v));
  return v.get<Index>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, std::string("expected number, got ") + type_name(v));
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(key, "not finite");
  return d;
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, std::string("expected boolean, got ") + type_name(v));
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, std::string("expected string, got ") + type_name(v));
  return v.get<std::string>();
}

using Setter = std::function<void(const json&)>;

// Applies every key of `obj` through `setters`; unknown keys are errors.
void apply(const json& obj, const std::string& where, const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) bad(where.empty() ? "<root>" : where, "expected object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) bad(where.empty() ? key : where + "." + key, "unknown key");
    it->second(value);
  }
}

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) bad(key, why);
}

}  // namespace

const std::vector<std::string>& path_keys() {
  static const std::vector<std::string> keys = {
      "tokens", "timeline", "aligned", "empty_trs", "features", "bold", "rois",
      "runs", "activations", "partition", "degrees", "token_features",
      "map_full", "map_diff", "voxel_lambdas", "token_lambdas"};
  return keys;
}

RunConfig::RunConfig() : alpha_grid(default_alpha_grid()) {}

PartitionCriterion RunConfig::criterion() const {
  if (partition == "in") return PartitionCriterion::in_degree;
  if (partition == "out") return PartitionCriterion::out_degree;
  return PartitionCriterion::time_constant;
}

Index RunConfig::max_fir_lag() const {
  return fir_lags.empty() ? 0 : *std::max_element(fir_lags.begin(), fir_lags.end());
}

json RunConfig::to_json() const {
  json j;
  j["paths"] = paths;
  j["layer_src"] = layer_src;
  j["layer_tgt"] = layer_tgt;
  j["pca_k"] = pca_k;
  j["fir_lags"] = fir_lags;
  j["n_folds"] = n_folds;
  j["alpha_grid"] = alpha_grid;
  j["tau_max"] = tau_max;
  j["sigma"] = sigma;
  j["n_trials"] = n_trials;
  j["max_lag_tr"] = max_lag_tr;
  j["max_lag_tokens"] = max_lag_tokens;
  j["roi_threshold"] = roi_threshold;
  j["n_perm"] = n_perm;
  j["n_shuffles"] = n_shuffles;
  j["causal_pca_k"] = causal_pca_k;
  j["tr_seconds"] = tr_seconds;
  j["partition"] = partition;
  j["seed"] = seed;
  j["synth"] = {{"n_tr", synth.n_tr},
                {"n_voxels", synth.n_voxels},
                {"n_features", synth.n_features},
                {"n_rois", synth.n_rois},
                {"n_noise_rois", synth.n_noise_rois},
                {"noise_sigma", synth.noise_sigma},
                {"fast_rho", synth.fast_rho},
                {"slow_rho", synth.slow_rho},
                {"tokens_per_tr", synth.tokens_per_tr}};
  j["toylm"] = {{"planted", toylm.planted},
                {"n_layers", toylm.n_layers},
                {"d_model", toylm.d_model},
                {"n_heads", toylm.n_heads},
                {"d_ff", toylm.d_ff},
                {"vocab_size", toylm.vocab_size},
                {"seq_len", toylm.seq_len},
                {"tokens_per_second", toylm.tokens_per_second}};
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

void validate(const RunConfig& c) {
  require(c.layer_src >= 0, "layer_src", "must be >= 0");
  require(c.layer_tgt >= c.layer_src, "layer_tgt", "must be >= layer_src");
  require(c.pca_k >= 1, "pca_k", "must be >= 1");
  for (int lag : c.fir_lags) require(lag >= 0, "fir_lags", "lags must be >= 0");
  require(c.n_folds >= 2, "n_folds", "must be >= 2");
  require(!c.alpha_grid.empty(), "alpha_grid", "must not be empty");
  for (double a : c.alpha_grid) require(a >= 0.0, "alpha_grid", "alphas must be >= 0");
  require(c.tau_max >= 0, "tau_max", "must be >= 0");
  require(c.sigma > 0.0, "sigma", "must be > 0");
  require(c.n_trials >= 1, "n_trials", "must be >= 1");
  require(c.max_lag_tr >= 2, "max_lag_tr", "must be >= 2");
  require(c.max_lag_tokens >= 2, "max_lag_tokens", "must be >= 2");
  require(c.n_perm >= 0, "n_perm", "must be >= 0");
  require(c.n_shuffles >= 2, "n_shuffles", "must be >= 2");
  require(c.causal_pca_k >= 0, "causal_pca_k", "must be >= 0");
  require(c.tr_seconds > 0.0, "tr_seconds", "must be > 0");
  require(c.partition == "in" || c.partition == "out" || c.partition == "time", "partition",
          "must be one of in, out, time");
  const auto& s = c.synth;
  require(s.n_tr >= 20, "synth.n_tr", "must be >= 20");
  require(s.n_voxels >= 1, "synth.n_voxels", "must be >= 1");
  require(s.n_features >= 2, "synth.n_features", "must be >= 2");
  require(s.n_rois >= 1, "synth.n_rois", "must be >= 1");
  require(s.n_noise_rois >= 0, "synth.n_noise_rois", "must be >= 0");
  require(s.n_voxels >= s.n_rois + s.n_noise_rois, "synth.n_voxels", "need at least one voxel per ROI");
  require(s.noise_sigma >= 0.0, "synth.noise_sigma", "must be >= 0");
  require(s.fast_rho >= 0.0 && s.fast_rho < 1.0, "synth.fast_rho", "must be in [0, 1)");
  require(s.slow_rho >= 0.0 && s.slow_rho < 1.0, "synth.slow_rho", "must be in [0, 1)");
  require(s.tokens_per_tr >= 1, "synth.tokens_per_tr", "must be >= 1");
  const auto& t = c.toylm;
  require(t.n_layers >= 1, "toylm.n_layers", "must be >= 1");
  require(t.d_model >= 1, "toylm.d_model", "must be >= 1");
  require(t.n_heads >= 1 && t.d_model % t.n_heads == 0, "toylm.n_heads", "must divide d_model");
  require(t.d_ff >= 1, "toylm.d_ff", "must be >= 1");
  require(t.vocab_size >= 2, "toylm.vocab_size", "must be >= 2");
  require(t.seq_len >= 2, "toylm.seq_len", "must be >= 2");
  require(t.tokens_per_second > 0.0, "toylm.tokens_per_second", "must be > 0");
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  auto idx = [](Index& dst, const char* key) { return [&dst, key](const json& v) { dst = get_index(v, key); }; };
  auto num = [](double& dst, const char* key) { return [&dst, key](const json& v) { dst = get_double(v, key); }; };

  const std::map<std::string, Setter> synth = {
      {"n_tr", idx(c.synth.n_tr, "synth.n_tr")},
      {"n_voxels", idx(c.synth.n_voxels, "synth.n_voxels")},
      {"n_features", idx(c.synth.n_features, "synth.n_features")},
      {"n_rois", idx(c.synth.n_rois, "synth.n_rois")},
      {"n_noise_rois", idx(c.synth.n_noise_rois, "synth.n_noise_rois")},
      {"noise_sigma", num(c.synth.noise_sigma, "synth.noise_sigma")},
      {"fast_rho", num(c.synth.fast_rho, "synth.fast_rho")},
      {"slow_rho", num(c.synth.slow_rho, "synth.slow_rho")},
      {"tokens_per_tr", idx(c.synth.tokens_per_tr, "synth.tokens_per_tr")}};
  const std::map<std::string, Setter> toylm = {
      {"planted", [&](const json& v) { c.toylm.planted = get_bool(v, "toylm.planted"); }},
      {"n_layers", idx(c.toylm.n_layers, "toylm.n_layers")},
      {"d_model", idx(c.toylm.d_model, "toylm.d_model")},
      {"n_heads", idx(c.toylm.n_heads, "toylm.n_heads")},
      {"d_ff", idx(c.toylm.d_ff, "toylm.d_ff")},
      {"vocab_size", idx(c.toylm.vocab_size, "toylm.vocab_size")},
      {"seq_len", idx(c.toylm.seq_len, "toylm.seq_len")},
      {"tokens_per_second", num(c.toylm.tokens_per_second, "toylm.tokens_per_second")}};
  std::map<std::string, Setter> paths;
  for (const auto& k : path_keys()) {
    paths[k] = [&c, k](const json& v) { c.paths[k] = get_string(v, "paths." + k); };
  }

  const std::map<std::string, Setter> root = {
      {"paths", [&](const json& v) { apply(v, "paths", paths); }},
      {"layer_src", idx(c.layer_src, "layer_src")},
      {"layer_tgt", idx(c.layer_tgt, "layer_tgt")},
      {"pca_k", idx(c.pca_k, "pca_k")},
      {"fir_lags",
       [&](const json& v) {
         if (!v.is_array()) bad("fir_lags", "expected array");
         c.fir_lags.clear();
         for (const auto& e : v) c.fir_lags.push_back(static_cast<int>(get_index(e, "fir_lags")));
       }},
      {"n_folds", idx(c.n_folds, "n_folds")},
      {"alpha_grid",
       [&](const json& v) {
         if (!v.is_array()) bad("alpha_grid", "expected array");
         c.alpha_grid.clear();
         for (const auto& e : v) c.alpha_grid.push_back(get_double(e, "alpha_grid"));
       }},
      {"tau_max", idx(c.tau_max, "tau_max")},
      {"sigma", num(c.sigma, "sigma")},
      {"n_trials", idx(c.n_trials, "n_trials")},
      {"max_lag_tr", idx(c.max_lag_tr, "max_lag_tr")},
      {"max_lag_tokens", idx(c.max_lag_tokens, "max_lag_tokens")},
      {"roi_threshold", num(c.roi_threshold, "roi_threshold")},
      {"n_perm", idx(c.n_perm, "n_perm")},
      {"n_shuffles", idx(c.n_shuffles, "n_shuffles")},
      {"causal_pca_k", idx(c.causal_pca_k, "causal_pca_k")},
      {"tr_seconds", num(c.tr_seconds, "tr_seconds")},
      {"partition", [&](const json& v) { c.partition = get_string(v, "partition"); }},
      {"seed",
       [&](const json& v) {
         if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad("seed", "expected non-negative integer");
         c.seed = v.get<std::uint64_t>();
       }},
      {"synth", [&](const json& v) { apply(v, "synth", synth); }},
      {"toylm", [&](const json& v) { apply(v, "toylm", toylm); }}};

  apply(j, "", root);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  const auto bytes = read_file_bytes(file);
  const std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("config: " + std::string(e.what()), e.byte);
  }
  return parse_run_config(j, file.parent_path());
}

}  // namespace lmbrain::cli
