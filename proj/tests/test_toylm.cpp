#include "doctest.h"

#include "lmbrain/causal.hpp"
#include "lmbrain/io.hpp"
#include "lmbrain/toylm.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <cstring>

using namespace lmbrain;

namespace {

ToyLmConfig small_config(std::uint64_t seed) {
  ToyLmConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = 11;
  cfg.max_seq = 16;
  cfg.seed = seed;
  return cfg;
}

using Rows = std::vector<std::vector<double>>;

// Straight-line reimplementation on nested vectors: pre-norm blocks,
// causal softmax attention with linear distance penalties, GELU MLP.
Rows naive_forward(const ToyLmWeights& w, const std::vector<int>& tokens) {
  const auto& cfg = w.config;
  const std::size_t T = tokens.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());

  Rows x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) x[t][i] = w.token_embedding(tokens[t], static_cast<Index>(i));

  auto norm = [&](const Rows& in, const Vector& g, const Vector& b) {
    Rows out = in;
    for (std::size_t t = 0; t < T; ++t) {
      double mean = 0.0;
      for (double v : in[t]) mean += v;
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (double v : in[t]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i)
        out[t][i] = (in[t][i] - mean) / std::sqrt(var + 1e-5) * g(static_cast<Index>(i)) + b(static_cast<Index>(i));
    }
    return out;
  };
  auto matvec = [](const std::vector<double>& v, const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()), 0.0);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(c)] += v[static_cast<std::size_t>(r)] * m(r, c);
    return out;
  };

  for (const auto& blk : w.blocks) {
    const Rows a = norm(x, blk.ln1_gain, blk.ln1_bias);
    Rows q(T), k(T), v(T);
    for (std::size_t t = 0; t < T; ++t) {
      q[t] = matvec(a[t], blk.attn.wq);
      k[t] = matvec(a[t], blk.attn.wk);
      v[t] = matvec(a[t], blk.attn.wv);
    }
    Rows mixed(T, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.n_heads); ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> s(t + 1);
        for (std::size_t u = 0; u <= t; ++u) {
          double dot = 0.0;
          for (std::size_t i = h * hd; i < (h + 1) * hd; ++i) dot += q[t][i] * k[u][i];
          s[u] = dot / std::sqrt(static_cast<double>(hd)) - blk.attn.alibi_slopes[h] * static_cast<double>(t - u);
        }
        const double top = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - top));
        for (std::size_t u = 0; u <= t; ++u)
          for (std::size_t i = h * hd; i < (h + 1) * hd; ++i) mixed[t][i] += s[u] / z * v[u][i];
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      const auto o = matvec(mixed[t], blk.attn.wo);
      for (std::size_t i = 0; i < d; ++i) x[t][i] += o[i];
    }
    const Rows m = norm(x, blk.ln2_gain, blk.ln2_bias);
    for (std::size_t t = 0; t < T; ++t) {
      auto hidden = matvec(m[t], blk.mlp.w1);
      for (std::size_t j = 0; j < ff; ++j) {
        const double pre = hidden[j] + blk.mlp.b1(static_cast<Index>(j));
        hidden[j] = 0.5 * pre * (1.0 + std::erf(pre / std::sqrt(2.0)));
      }
      const auto out = matvec(hidden, blk.mlp.w2);
      for (std::size_t i = 0; i < d; ++i) x[t][i] += out[i] + blk.mlp.b2(static_cast<Index>(i));
    }
  }
  return x;
}

ToyLmConfig linear_config(std::uint64_t seed, Index layers) {
  ToyLmConfig cfg = small_config(seed);
  cfg.n_layers = layers;
  cfg.use_attention = false;
  cfg.use_layernorm = false;
  cfg.activation = Activation::identity;
  return cfg;
}

}  // namespace

TEST_CASE("toylm_init: deterministic, head dim, zero-mean weights") {
  ToyLmConfig cfg;
  cfg.seed = 5;
  const auto a = toylm_init(cfg);
  const auto b = toylm_init(cfg);
  CHECK(a.token_embedding == b.token_embedding);
  CHECK(a.blocks[3].mlp.w2 == b.blocks[3].mlp.w2);
  CHECK(std::memcmp(a.blocks[1].attn.wq.data(), b.blocks[1].attn.wq.data(),
                    sizeof(double) * static_cast<std::size_t>(a.blocks[1].attn.wq.size())) == 0);

  cfg.d_model = 32;
  cfg.n_heads = 4;
  CHECK(cfg.head_dim() == 8);

  const Matrix& e = a.token_embedding;
  CHECK(e.size() >= 10000);
  const double n = static_cast<double>(e.size());
  const double mean = e.mean();
  const double sd = std::sqrt((e.array() - mean).square().sum() / (n - 1.0));
  CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(n));
  CHECK(sd == doctest::Approx(1.0 / std::sqrt(64.0)).epsilon(0.02));

  cfg.d_model = 30;
  CHECK_THROWS_AS(toylm_init(cfg), ConfigError);
}

TEST_CASE("toylm_forward: matches a straight-line loop implementation") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto w = toylm_init(small_config(seed));
    const auto tokens = random_tokens(5, 11, seed + 40);
    const auto acts = toylm_forward(w, tokens);
    REQUIRE(acts.size() == 3);
    const Rows ref = naive_forward(w, tokens);
    double err = 0.0;
    for (Index t = 0; t < 5; ++t)
      for (Index i = 0; i < 8; ++i)
        err = std::max(err, std::abs(acts[2](t, i) - ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("toylm_forward: prefix property at every layer") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    ToyLmConfig cfg;
    cfg.n_layers = 3;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq = 32;
    cfg.seed = seed;
    const auto w = toylm_init(cfg);
    auto tokens = random_tokens(20, cfg.vocab_size, seed + 9);
    const auto before = toylm_forward(w, tokens);
    Rng rng(seed);
    const auto p = static_cast<Index>(rng.below(20));
    tokens[static_cast<std::size_t>(p)] = (tokens[static_cast<std::size_t>(p)] + 1) % static_cast<int>(cfg.vocab_size);
    const auto after = toylm_forward(w, tokens);
    for (std::size_t l = 0; l < before.size(); ++l) {
      if (p > 0) CHECK(before[l].topRows(p) == after[l].topRows(p));
      CHECK(before[l].row(p) != after[l].row(p));
    }
  }
}

TEST_CASE("toylm_forward: single token and invalid input") {
  const auto w = toylm_init(small_config(1));
  const auto acts = toylm_forward(w, std::vector<int>{4});
  for (const auto& a : acts) {
    CHECK(a.rows() == 1);
    CHECK(a.allFinite());
  }
  CHECK_THROWS_AS(toylm_forward(w, std::vector<int>{11}), RangeError);
  CHECK_THROWS_AS(toylm_forward(w, std::vector<int>{-1}), RangeError);
  CHECK_THROWS_AS(toylm_forward(w, std::vector<int>(17, 0)), RangeError);
}

TEST_CASE("perturbation: zero sigma, identity target, bounded small-sigma response") {
  const auto w = toylm_init(small_config(4));
  const auto tokens = random_tokens(10, 11, 2);
  const auto zero = perturbation_pair(w, tokens, 0, 2, 0.0, 7);
  CHECK(zero.dx.isZero());
  CHECK(zero.dy.isZero());

  const auto same = perturbation_pair(w, tokens, 1, 1, 0.05, 7);
  CHECK(same.dy == same.dx);

  double prev_ratio = -1.0;
  for (double sigma : {1e-3, 1e-5, 1e-7}) {
    const auto r = perturbation_pair(w, tokens, 0, 2, sigma, 3);
    const double ratio = r.dy.norm() / r.dx.norm();
    CHECK(std::isfinite(ratio));
    CHECK(ratio < 100.0);
    if (prev_ratio > 0) CHECK(ratio == doctest::Approx(prev_ratio).epsilon(0.05));
    prev_ratio = ratio;
  }
}

TEST_CASE("perturbation: dX scale follows sigma times source RMS") {
  ToyLmConfig cfg;
  cfg.seed = 3;
  const auto w = toylm_init(cfg);
  const auto tokens = random_tokens(128, cfg.vocab_size, 5);
  const auto clean = toylm_forward(w, tokens);
  const auto r = perturbation_pair(w, tokens, 2, 4, 0.01, 11);
  CHECK(rms(r.dx) == doctest::Approx(0.01 * rms(clean[2])).epsilon(0.02));
  CHECK(std::abs(r.dx.mean()) < 3.0 * rms(r.dx) / std::sqrt(static_cast<double>(r.dx.size())));
}

TEST_CASE("perturbation: linear network response equals dX times the layer map") {
  for (Index layers : {1, 3}) {
    const auto w = toylm_init(linear_config(9, layers));
    Matrix a = Matrix::Identity(8, 8);
    for (const auto& b : w.blocks) a = a * (Matrix::Identity(8, 8) + b.mlp.w1 * b.mlp.w2);
    const auto tokens = random_tokens(12, 11, 1);
    const auto r = perturbation_pair(w, tokens, 0, layers, 1e-4, 21);
    const Matrix expected = oracle::naive_matmul(r.dx, a);
    CHECK((r.dy - expected).norm() <= 1e-3 * expected.norm());
  }
}

TEST_CASE("perturbed_forward: layout, trial seeds, locality and finiteness") {
  ToyLmConfig cfg;
  cfg.n_layers = 4;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.seed = 8;
  const auto w = toylm_init(cfg);
  const auto tokens = random_tokens(30, cfg.vocab_size, 4);
  const auto runs = perturbed_forward(w, tokens, 1, 0.1, 3, 100);
  REQUIRE(runs.size() == 9);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    CHECK(r.trial == static_cast<Index>(i / 3));
    CHECK(r.trial_seed == 100 + static_cast<std::uint64_t>(r.trial));
    CHECK(r.target_layer == 2 + static_cast<Index>(i % 3));
    CHECK(r.target_layer > r.source_layer);
    CHECK(r.dx.allFinite());
    CHECK(r.dy.allFinite());
    const auto single = perturbation_pair(w, tokens, 1, r.target_layer, 0.1, r.trial_seed, r.trial);
    CHECK(single.dx == r.dx);
    CHECK(single.dy == r.dy);
  }
  CHECK_THROWS_AS(perturbed_forward(w, tokens, 4, 0.1, 1, 0), RangeError);
  CHECK_THROWS_AS(perturbed_forward(w, tokens, 0, 0.0, 1, 0), ConfigError);
}

TEST_CASE("exporter files: round trip reproduces the in-process causality matrix") {
  TempDir dir("export");
  const auto w = toylm_init(small_config(6));
  const auto tokens = random_tokens(16, 11, 3);
  auto runs = perturbed_forward(w, tokens, 0, 0.01, 4, 50);

  std::vector<PerturbationRun> imported;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string stem = "run" + std::to_string(i);
    export_perturbation_run(runs[i], dir.path(), stem);
    imported.push_back(import_perturbation_run(dir / (stem + ".dx.hfm"), dir / (stem + ".dy.hfm"),
                                               dir / (stem + ".meta.json")));
    CHECK(imported.back().target_layer == runs[i].target_layer);
    CHECK(imported.back().trial_seed == runs[i].trial_seed);
    CHECK(imported.back().sigma == runs[i].sigma);
  }
  // Files carry float32; the in-process path rounded the same way must agree exactly.
  auto rounded = runs;
  for (auto& r : rounded) {
    r.dx = r.dx.cast<float>().cast<double>();
    r.dy = r.dy.cast<float>().cast<double>();
  }
  const auto a = causality_matrix(rounded, 3);
  const auto b = causality_matrix(imported, 3);
  CHECK(a.aggregate == b.aggregate);
  const auto exact = causality_matrix(runs, 3);
  CHECK((exact.aggregate - b.aggregate).norm() <= 1e-5 * exact.aggregate.norm());
}

TEST_CASE("exporter files: mismatched rows and bad metadata") {
  TempDir dir("export-bad");
  store_matrix(oracle::random_matrix(5, 3, 1), dir / "a.dx.hfm");
  store_matrix(oracle::random_matrix(6, 3, 2), dir / "a.dy.hfm");
  write_text_file(dir / "a.meta.json", R"({"source_layer":0,"target_layer":1,"sigma":0.01,"trial":0})");
  CHECK_THROWS_AS(import_perturbation_run(dir / "a.dx.hfm", dir / "a.dy.hfm", dir / "a.meta.json"), FormatError);

  store_matrix(oracle::random_matrix(5, 3, 2), dir / "a.dy.hfm");
  write_text_file(dir / "b.meta.json", R"({"source_layer":0})");
  CHECK_THROWS_AS(import_perturbation_run(dir / "a.dx.hfm", dir / "a.dy.hfm", dir / "b.meta.json"), FormatError);
}

TEST_CASE("exporter files: a zero dY file gives a zero causality matrix") {
  TempDir dir("export-zero");
  store_matrix(oracle::random_matrix(20, 4, 1), dir / "z.dx.hfm");
  store_matrix(Matrix::Zero(20, 4), dir / "z.dy.hfm");
  write_text_file(dir / "z.meta.json", R"({"source_layer":1,"target_layer":3,"sigma":0.01,"trial":0})");
  const std::vector<PerturbationRun> runs{import_perturbation_run(dir / "z.dx.hfm", dir / "z.dy.hfm", dir / "z.meta.json")};
  const auto c = causality_matrix(runs, 4);
  CHECK(c.aggregate.isZero());
  CHECK(threshold_graph(c).edge_count() == 0);
}

TEST_CASE("planted integration network layout") {
  PlantedLmOptions opt;
  opt.seed = 2;
  const auto p = planted_integration_lm(opt);
  const auto& attn = p.weights.blocks.front().attn;
  const Index d = 20;
  for (Index j = 0; j < d; ++j) {
    Index blocks_read = 0;
    for (Index b = 0; b < opt.n_blocks; ++b) blocks_read += !attn.wv.block(b * opt.block_size, j, opt.block_size, 1).isZero();
    CHECK(blocks_read == (p.high_target[static_cast<std::size_t>(j)] ? opt.high_fan_in : 1));
    CHECK(p.high_target[static_cast<std::size_t>(j)] == (j >= d / 2));
  }
  CHECK(attn.alibi_slopes[0] > attn.alibi_slopes[1]);
}
