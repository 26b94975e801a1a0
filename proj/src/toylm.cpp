#include "lmbrain/toylm.hpp"

#include "lmbrain/io.hpp"
#include "lmbrain/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lmbrain {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix gaussian(Rng& rng, Index rows, Index cols, double scale) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias) {
  Matrix out(x.rows(), x.cols());
  const auto d = static_cast<double>(x.cols());
  for (Index t = 0; t < x.rows(); ++t) {
    const double mean = x.row(t).sum() / d;
    const double var = (x.row(t).array() - mean).square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    out.row(t) = ((x.row(t).array() - mean) * inv * gain.transpose().array() +
                  bias.transpose().array())
                     .matrix();
  }
  return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

Matrix attention(const ToyLmConfig& cfg, const AttentionWeights& a, const Matrix& x) {
  const Index T = x.rows();
  const Index hd = cfg.head_dim();
  const Matrix q = x * a.wq;
  const Matrix k = x * a.wk;
  const Matrix v = x * a.wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix heads = Matrix::Zero(T, cfg.d_model);
  Vector scores(T);
  for (Index h = 0; h < cfg.n_heads; ++h) {
    const Index c0 = h * hd;
    const double slope = a.alibi_slopes[static_cast<std::size_t>(h)];
    for (Index t = 0; t < T; ++t) {
      double top = -std::numeric_limits<double>::infinity();
      for (Index s = 0; s <= t; ++s) {
        scores(s) = scale * q.row(t).segment(c0, hd).dot(k.row(s).segment(c0, hd)) -
                    slope * static_cast<double>(t - s);
        top = std::max(top, scores(s));
      }
      double norm = 0.0;
      for (Index s = 0; s <= t; ++s) {
        scores(s) = std::exp(scores(s) - top);
        norm += scores(s);
      }
      for (Index s = 0; s <= t; ++s) {
        heads.row(t).segment(c0, hd) += (scores(s) / norm) * v.row(s).segment(c0, hd);
      }
    }
  }
  return heads * a.wo;
}

Matrix run_block(const ToyLmConfig& cfg, const BlockWeights& b, const Matrix& x) {
  Matrix h = x;
  if (cfg.use_attention) {
    const Matrix a = cfg.use_layernorm ? layer_norm(h, b.ln1_gain, b.ln1_bias) : h;
    h += attention(cfg, b.attn, a);
  }
  if (cfg.use_mlp) {
    const Matrix m = cfg.use_layernorm ? layer_norm(h, b.ln2_gain, b.ln2_bias) : h;
    Matrix hidden = (m * b.mlp.w1).rowwise() + b.mlp.b1.transpose();
    if (cfg.activation == Activation::gelu) hidden = hidden.unaryExpr(&gelu);
    h += (hidden * b.mlp.w2).rowwise() + b.mlp.b2.transpose();
  }
  return h;
}

}  // namespace

void ToyLmConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || max_seq < 1) {
    throw ConfigError("toylm: all sizes must be >= 1");
  }
  if (d_model % n_heads != 0) throw ConfigError("toylm: d_model must be divisible by n_heads");
}

ToyLmWeights toylm_init(const ToyLmConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Index d = cfg.d_model;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  ToyLmWeights w;
  w.config = cfg;
  w.token_embedding = gaussian(rng, cfg.vocab_size, d, scale);
  w.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& b : w.blocks) {
    b.ln1_gain = Vector::Ones(d);
    b.ln1_bias = Vector::Zero(d);
    b.attn.wq = gaussian(rng, d, d, scale);
    b.attn.wk = gaussian(rng, d, d, scale);
    b.attn.wv = gaussian(rng, d, d, scale);
    b.attn.wo = gaussian(rng, d, d, scale);
    b.attn.alibi_slopes.resize(static_cast<std::size_t>(cfg.n_heads));
    for (Index h = 0; h < cfg.n_heads; ++h) {
      b.attn.alibi_slopes[static_cast<std::size_t>(h)] =
          std::exp2(-8.0 * static_cast<double>(h + 1) / static_cast<double>(cfg.n_heads));
    }
    b.ln2_gain = Vector::Ones(d);
    b.ln2_bias = Vector::Zero(d);
    b.mlp.w1 = gaussian(rng, d, cfg.d_ff, scale);
    b.mlp.b1 = Vector::Zero(cfg.d_ff);
    b.mlp.w2 = gaussian(rng, cfg.d_ff, d, scale);
    b.mlp.b2 = Vector::Zero(d);
  }
  return w;
}

LayerActivations toylm_forward(const ToyLmWeights& w, std::span<const int> tokens) {
  const auto& cfg = w.config;
  if (tokens.empty()) throw DimensionError("toylm_forward: empty token sequence");
  if (static_cast<Index>(tokens.size()) > cfg.max_seq) {
    throw RangeError("toylm_forward: sequence longer than max_seq");
  }
  Matrix x(static_cast<Index>(tokens.size()), cfg.d_model);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] >= cfg.vocab_size) {
      throw RangeError("toylm_forward: token id " + std::to_string(tokens[t]) + " at position " +
                       std::to_string(t) + " outside vocabulary");
    }
    x.row(static_cast<Index>(t)) = w.token_embedding.row(tokens[t]);
  }
  return toylm_forward_from(w, 0, x);
}

LayerActivations toylm_forward_from(const ToyLmWeights& w, Index source_layer, const Matrix& x) {
  const auto& cfg = w.config;
  if (source_layer < 0 || source_layer > cfg.n_layers) throw RangeError("toylm: bad source layer");
  if (x.cols() != cfg.d_model) throw DimensionError("toylm: activation width != d_model");
  LayerActivations acts;
  acts.reserve(static_cast<std::size_t>(cfg.n_layers - source_layer + 1));
  acts.push_back(x);
  for (Index l = source_layer; l < cfg.n_layers; ++l) {
    acts.push_back(run_block(cfg, w.blocks[static_cast<std::size_t>(l)], acts.back()));
  }
  return acts;
}

double rms(const Matrix& x) {
  return x.size() == 0 ? 0.0 : std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

namespace {

PerturbationRun make_run(const LayerActivations& clean, Index source_layer, Index target_layer,
                         const Matrix& dx, const LayerActivations& perturbed, double sigma,
                         std::uint64_t trial_seed, Index trial) {
  PerturbationRun run;
  run.dx = dx;
  run.dy = perturbed[static_cast<std::size_t>(target_layer - source_layer)] -
           clean[static_cast<std::size_t>(target_layer)];
  if (target_layer == source_layer) run.dy = dx;
  run.sigma = sigma;
  run.trial_seed = trial_seed;
  run.source_layer = source_layer;
  run.target_layer = target_layer;
  run.trial = trial;
  return run;
}

Matrix draw_perturbation(const Matrix& source, double sigma, std::uint64_t trial_seed) {
  Rng rng(trial_seed);
  return gaussian(rng, source.rows(), source.cols(), sigma * rms(source));
}

}  // namespace

PerturbationRun perturbation_pair(const ToyLmWeights& w, std::span<const int> tokens,
                                  Index source_layer, Index target_layer, double sigma,
                                  std::uint64_t trial_seed, Index trial) {
  const Index n = w.config.n_layers;
  if (source_layer < 0 || source_layer >= n) throw RangeError("perturbation: source layer out of range");
  if (target_layer < source_layer || target_layer > n) {
    throw RangeError("perturbation: target layer must lie in [source, n_layers]");
  }
  if (!(sigma >= 0.0)) throw ConfigError("perturbation: sigma must be nonnegative");
  const auto clean = toylm_forward(w, tokens);
  const Matrix& src = clean[static_cast<std::size_t>(source_layer)];
  const Matrix dx = draw_perturbation(src, sigma, trial_seed);
  const auto perturbed = toylm_forward_from(w, source_layer, src + dx);
  return make_run(clean, source_layer, target_layer, dx, perturbed, sigma, trial_seed, trial);
}

std::vector<PerturbationRun> perturbed_forward(const ToyLmWeights& w, std::span<const int> tokens,
                                               Index source_layer, double sigma, Index n_trials,
                                               std::uint64_t seed) {
  const Index n = w.config.n_layers;
  if (source_layer < 0 || source_layer >= n) throw RangeError("perturbed_forward: source layer out of range");
  if (!(sigma > 0.0)) throw ConfigError("perturbed_forward: sigma must be positive");
  if (n_trials < 1) throw ConfigError("perturbed_forward: need at least one trial");
  const auto clean = toylm_forward(w, tokens);
  const Matrix& src = clean[static_cast<std::size_t>(source_layer)];
  std::vector<PerturbationRun> runs;
  for (Index trial = 0; trial < n_trials; ++trial) {
    const std::uint64_t trial_seed = seed + static_cast<std::uint64_t>(trial);
    const Matrix dx = draw_perturbation(src, sigma, trial_seed);
    const auto perturbed = toylm_forward_from(w, source_layer, src + dx);
    for (Index target = source_layer + 1; target <= n; ++target) {
      runs.push_back(make_run(clean, source_layer, target, dx, perturbed, sigma, trial_seed, trial));
    }
  }
  return runs;
}

std::string perturbation_meta_json(const PerturbationRun& run) {
  nlohmann::json j;
  j["source_layer"] = run.source_layer;
  j["target_layer"] = run.target_layer;
  j["sigma"] = run.sigma;
  j["trial"] = run.trial;
  j["trial_seed"] = run.trial_seed;
  return j.dump() + "\n";
}

void export_perturbation_run(const PerturbationRun& run, const std::filesystem::path& dir,
                             const std::string& stem) {
  store_matrix(run.dx, dir / (stem + ".dx.hfm"));
  store_matrix(run.dy, dir / (stem + ".dy.hfm"));
  write_text_file(dir / (stem + ".meta.json"), perturbation_meta_json(run));
}

PerturbationRun import_perturbation_run(const std::filesystem::path& dx_path,
                                        const std::filesystem::path& dy_path,
                                        const std::filesystem::path& meta_path) {
  PerturbationRun run;
  run.dx = load_matrix(dx_path);
  run.dy = load_matrix(dy_path);
  if (run.dx.rows() != run.dy.rows()) {
    throw FormatError("perturbation run: dX has " + std::to_string(run.dx.rows()) +
                          " rows but dY has " + std::to_string(run.dy.rows()),
                      4);
  }
  const auto bytes = read_file_bytes(meta_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    run.source_layer = j.at("source_layer").get<Index>();
    run.target_layer = j.at("target_layer").get<Index>();
    run.sigma = j.at("sigma").get<double>();
    run.trial = j.at("trial").get<Index>();
    run.trial_seed = j.value("trial_seed", std::uint64_t{0});
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("perturbation meta: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("perturbation meta: ") + e.what(), 0);
  }
  if (run.target_layer < run.source_layer) throw FormatError("perturbation meta: target below source", 0);
  return run;
}

std::vector<int> random_tokens(Index length, Index vocab_size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(static_cast<std::size_t>(length));
  for (auto& t : out) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size)));
  return out;
}

PlantedLm planted_integration_lm(const PlantedLmOptions& opt) {
  const Index d = opt.n_blocks * opt.block_size;
  if (d % 2 != 0) throw ConfigError("planted lm: n_blocks * block_size must be even");
  if (opt.high_fan_in < 1 || opt.high_fan_in > opt.n_blocks) {
    throw ConfigError("planted lm: high_fan_in must lie in [1, n_blocks]");
  }

  ToyLmConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = d;
  cfg.n_heads = 2;
  cfg.d_ff = d;
  cfg.vocab_size = 256;
  cfg.max_seq = opt.max_seq;
  cfg.seed = opt.seed;
  cfg.use_mlp = false;

  PlantedLm out{toylm_init(cfg), std::vector<bool>(static_cast<std::size_t>(d), false)};
  Rng rng(opt.seed ^ 0x5851F42D4C957F2DULL);
  auto& attn = out.weights.blocks.front().attn;
  attn.wq.setZero();
  attn.wk.setZero();
  attn.wo = Matrix::Identity(d, d);
  attn.wv.setZero();
  attn.alibi_slopes = {opt.fast_slope, opt.slow_slope};

  const Index half = d / 2;
  for (Index j = 0; j < d; ++j) {
    const bool high = j >= half;
    out.high_target[static_cast<std::size_t>(j)] = high;
    auto blocks = rng.permutation(static_cast<std::size_t>(opt.n_blocks));
    blocks.resize(static_cast<std::size_t>(high ? opt.high_fan_in : 1));
    for (auto blk : blocks) {
      for (Index i = 0; i < opt.block_size; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        attn.wv(static_cast<Index>(blk) * opt.block_size + i, j) = sign * rng.uniform(0.5, 1.5);
      }
    }
  }
  return out;
}

}  // namespace lmbrain
