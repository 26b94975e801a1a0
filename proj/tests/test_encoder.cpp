#include "doctest.h"

#include "lmbrain/encoder.hpp"
#include "lmbrain/parallel.hpp"
#include "lmbrain/synth.hpp"

#include "oracles.hpp"

using namespace lmbrain;

namespace {

EncodingConfig small_grid(Index folds = 5) {
  EncodingConfig cfg;
  cfg.n_folds = folds;
  cfg.alpha_grid = log_spaced(1e-1, 1e4, 6);
  return cfg;
}

SynthData planted(std::uint64_t seed, double noise, Index n_tr = 1000, Index n_voxels = 40) {
  PlantedHierarchyOptions opt;
  opt.n_tr = n_tr;
  opt.n_voxels = n_voxels;
  opt.n_rois = std::min<Index>(8, n_voxels);
  opt.noise_sigma = noise;
  opt.seed = seed;
  return synth_generate(planted_hierarchy_spec(opt));
}

}  // namespace

TEST_CASE("alpha grid defaults") {
  const auto g = default_alpha_grid();
  REQUIRE(g.size() == 10);
  CHECK(g.front() == 1e-1);
  CHECK(g.back() == 1e8);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(10.0));
}

TEST_CASE("fold layout") {
  EncodingConfig cfg;
  const auto l = make_fold_layout(103, cfg);
  CHECK(l.folds() == 5);
  CHECK(l.begin(0) == 0);
  CHECK(l.end(4) == 103);
  for (Index f = 1; f < 5; ++f) CHECK(l.begin(f) == l.end(f - 1));
  cfg.fold_starts = {0, 40, 90};
  const auto s = make_fold_layout(103, cfg);
  CHECK(s.folds() == 3);
  CHECK(s.end(1) == 90);
  cfg.fold_starts = {5, 40};
  CHECK_THROWS_AS(make_fold_layout(103, cfg), ConfigError);
  cfg.fold_starts = {};
  cfg.n_folds = 1;
  CHECK_THROWS_AS(make_fold_layout(103, cfg), ConfigError);
}

TEST_CASE("fit_encoding: noiseless linear response is recovered") {
  const Matrix x = oracle::random_matrix(300, 6, 1);
  const Matrix b = oracle::random_matrix(6, 10, 2);
  const BoldMatrix w(x * b, 1.5);
  const auto r = fit_encoding(x, w, small_grid());
  CHECK(r.mean_accuracy.minCoeff() >= 0.999);
  for (Index f = 0; f < 5; ++f)
    for (Index v = 0; v < 10; ++v) {
      const double a = r.alpha(f, v);
      CHECK(std::find(r.alpha_grid.begin(), r.alpha_grid.end(), a) != r.alpha_grid.end());
    }
}

TEST_CASE("fit_encoding: pure noise centres on zero at the analytic scale") {
  const Matrix x = oracle::random_matrix(1000, 5, 3);
  const BoldMatrix w(oracle::random_matrix(1000, 50, 4), 1.5);
  const auto r = fit_encoding(x, w, small_grid());
  const Vector acc = r.mean_accuracy;
  const double n_val = 200.0;
  // Per-fold scores have std ~ 1/sqrt(n_val); the 5-fold mean shrinks it by sqrt(5).
  const double expected_sd = 1.0 / std::sqrt(n_val * 5.0);
  const double mean = acc.mean();
  const double sd = std::sqrt((acc.array() - mean).square().sum() / 49.0);
  CHECK(std::abs(mean) < 3.0 * expected_sd / std::sqrt(50.0) + 0.01);
  CHECK(sd > 0.5 * expected_sd);
  CHECK(sd < 2.0 * expected_sd);
  CHECK((r.fold_accuracy.array().abs() <= 1.0).all());
}

TEST_CASE("fit_encoding: accuracy rises with signal-to-noise") {
  const auto lags = default_fir_lags();
  double prev = -1.0;
  for (double noise : {8.0, 4.0, 2.0, 1.0, 0.5}) {
    const auto d = planted(11, noise, 800, 30);
    const Matrix x = fir_expand(d.features, lags);
    const double acc = fit_encoding(x, d.bold, small_grid()).mean_accuracy.mean();
    CHECK(acc >= prev);
    prev = acc;
  }
}

TEST_CASE("no leakage: poisoning the held-out fold leaves its alphas unchanged") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = planted(seed, 1.0, 500, 12);
    const Matrix x = fir_expand(d.features, default_fir_lags());
    const auto cfg = small_grid();
    const auto base = fit_encoding(x, d.bold, cfg);
    for (Index f = 0; f < cfg.n_folds; ++f) {
      Matrix xp = x;
      BoldMatrix wp = d.bold;
      const Index b = base.layout.begin(f), n = base.layout.end(f) - b;
      xp.middleRows(b, n).setConstant(1e3);
      wp.data.middleRows(b, n).setConstant(-7.0);
      const auto poisoned = fit_encoding(xp, wp, cfg);
      CHECK(poisoned.alpha_index.row(f) == base.alpha_index.row(f));
    }
  }
}

TEST_CASE("masked rows are never scored") {
  const auto d = planted(5, 1.0, 500, 8);
  const Matrix x = fir_expand(d.features, default_fir_lags());
  std::vector<bool> mask(500, false);
  for (Index r = 120; r < 140; ++r) mask[static_cast<std::size_t>(r)] = true;
  const auto cfg = small_grid();
  const auto base = fit_encoding(x, d.bold, cfg, mask);
  BoldMatrix poisoned = d.bold;
  poisoned.data.middleRows(120, 20).setConstant(50.0);
  const auto after = fit_encoding(x, poisoned, cfg, mask);
  // Rows 120..139 lie in fold 1 (100..199): its score ignores them and its training excludes them.
  CHECK(after.fold_accuracy.row(1) == base.fold_accuracy.row(1));
  CHECK(after.fold_accuracy.row(0) != base.fold_accuracy.row(0));
}

TEST_CASE("guard rows shrink the scored block") {
  const auto d = planted(6, 1.0, 500, 4);
  const Matrix x = fir_expand(d.features, default_fir_lags());
  auto cfg = small_grid();
  cfg.guard_rows = 9;
  BoldMatrix poisoned = d.bold;
  const auto base = fit_encoding(x, d.bold, cfg);
  poisoned.data.middleRows(200, 9).setConstant(20.0);
  const auto after = fit_encoding(x, poisoned, cfg);
  CHECK(after.fold_accuracy.row(2) == base.fold_accuracy.row(2));
}

TEST_CASE("fit_encoding: errors") {
  const Matrix x = oracle::random_matrix(20, 2, 1);
  const BoldMatrix w(oracle::random_matrix(20, 3, 2), 1.5);
  EncodingConfig cfg = small_grid(10);
  CHECK_THROWS_AS(fit_encoding(x, w, cfg), ConfigError);
  CHECK_THROWS_AS(fit_encoding(oracle::random_matrix(19, 2, 1), w, small_grid()), DimensionError);
  cfg = small_grid();
  cfg.alpha_grid = {-1.0};
  CHECK_THROWS_AS(fit_encoding(x, w, cfg), ConfigError);
}

TEST_CASE("fit_encoding: constant voxel ties resolve to the smallest alpha") {
  const Matrix x = oracle::random_matrix(100, 3, 1);
  Matrix y = oracle::random_matrix(100, 2, 2);
  y.col(1).setConstant(4.0);
  const auto r = fit_encoding(x, BoldMatrix(y, 1.5), small_grid());
  CHECK((r.alpha_index.col(1).array() == 0).all());
  CHECK(r.mean_accuracy(1) == 0.0);
}

TEST_CASE("fit_encoding: voxels are fitted independently and thread count does not matter") {
  const auto d = planted(8, 1.0, 400, 10);
  const Matrix x = fir_expand(d.features, default_fir_lags());
  set_num_threads(1);
  const auto one = fit_encoding(x, d.bold, small_grid());
  set_num_threads(8);
  const auto eight = fit_encoding(x, d.bold, small_grid());
  set_num_threads(0);
  CHECK(one.fold_accuracy == eight.fold_accuracy);
  CHECK(one.alpha_index == eight.alpha_index);
  for (std::size_t f = 0; f < one.fold_weights.size(); ++f) CHECK(one.fold_weights[f] == eight.fold_weights[f]);

  const std::vector<Index> subset{7, 2, 5};
  const BoldMatrix sub(d.bold.data(Eigen::all, subset), 1.5);
  const auto part = fit_encoding(x, sub, small_grid());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    CHECK(part.fold_accuracy.col(static_cast<Index>(i)) == one.fold_accuracy.col(subset[i]));
    CHECK(part.alpha_index.col(static_cast<Index>(i)) == one.alpha_index.col(subset[i]));
  }
}

TEST_CASE("fit_encoding: explicit fold starts (one fold per story)") {
  const Matrix x = oracle::random_matrix(200, 3, 1);
  const BoldMatrix w(x * oracle::random_matrix(3, 2, 2) + 0.1 * oracle::random_matrix(200, 2, 3), 1.5);
  auto cfg = small_grid();
  cfg.fold_starts = {0, 70, 130};
  const auto r = fit_encoding(x, w, cfg);
  CHECK(r.layout.folds() == 3);
  CHECK(r.fold_accuracy.rows() == 3);
  cfg.fold_starts = {0, 100};
  CHECK(fit_encoding(x, w, cfg).fold_accuracy.rows() == 2);
}

TEST_CASE("accuracy_map: fold means") {
  RidgeResult r;
  r.fold_accuracy = Matrix{{0.2, 0.4, -0.1}, {0.6, 0.0, 0.3}};
  r.mean_accuracy = r.fold_accuracy.colwise().mean().transpose();
  const BoldMatrix w(Matrix::Zero(3, 3), 1.5, {4, 5, 6});
  const auto m = accuracy_map(r, w, {"full", 3, "", {}});
  CHECK(m.values(0) == doctest::Approx(0.4));
  CHECK(m.values(1) == doctest::Approx(0.2));
  CHECK(m.values(2) == doctest::Approx(0.1));
  CHECK(m.voxel_ids == std::vector<std::int64_t>{4, 5, 6});

  RidgeResult single;
  single.fold_accuracy = Matrix{{0.1, 0.2, 0.3}};
  single.mean_accuracy = single.fold_accuracy.row(0).transpose();
  CHECK(accuracy_map(single, w).values == single.fold_accuracy.row(0).transpose());

  const auto d = planted(9, 1.0, 400, 6);
  const auto fit = fit_encoding(fir_expand(d.features, default_fir_lags()), d.bold, small_grid());
  const auto map = accuracy_map(fit, d.bold);
  for (Index v = 0; v < 6; ++v) {
    double s = 0.0;
    for (Index f = 0; f < 5; ++f) s += fit.fold_accuracy(f, v);
    CHECK(map.values(v) == doctest::Approx(s / 5.0).epsilon(1e-14));
  }
}

TEST_CASE("diff_map: zero, antisymmetry, provenance and mismatch") {
  const AccuracyMap a{oracle::random_vector(5, 1), {0, 1, 2, 3, 4}, {"partition:high", 4, "in_degree", {}}};
  const AccuracyMap b{oracle::random_vector(5, 2), {0, 1, 2, 3, 4}, {"partition:low", 4, "in_degree", {}}};
  CHECK(diff_map(a, a).values.isZero());
  CHECK(diff_map(a, b).values == -diff_map(b, a).values);
  const auto d = diff_map(a, b);
  REQUIRE(d.provenance.parents.size() == 2);
  CHECK(d.provenance.parents[0].find("high") != std::string::npos);
  CHECK(d.provenance.layer == 4);
  const AccuracyMap c{oracle::random_vector(5, 2), {0, 1, 2, 3, 9}, {}};
  CHECK_THROWS_AS(diff_map(a, c), DimensionError);
}

TEST_CASE("accuracy map CSV round trip") {
  const AccuracyMap a{oracle::random_vector(4, 1), {3, 8, 9, 12}, {"full", 2, "", {}}};
  const std::string csv = accuracy_map_csv(a, "config=abc seed=1");
  CHECK(csv.find("# map=full@layer2") != std::string::npos);
  const auto path = std::filesystem::temp_directory_path() / ("lmbrain-map-" + std::to_string(::getpid()) + ".csv");
  write_text_file(path, csv);
  const auto back = load_accuracy_map_csv(path);
  std::filesystem::remove(path);
  CHECK(back.voxel_ids == a.voxel_ids);
  CHECK(back.values == a.values);
}

TEST_CASE("planted hierarchy: high-minus-low map sign follows the planted level") {
  PlantedHierarchyOptions opt;
  opt.seed = 21;
  const auto d = synth_generate(planted_hierarchy_spec(opt));
  const auto lags = default_fir_lags();
  std::vector<Index> high, low;
  for (std::size_t j = 0; j < d.truth.feature_labels.size(); ++j)
    (d.truth.feature_labels[j] == Integration::high ? high : low).push_back(static_cast<Index>(j));
  EncodingConfig cfg;
  cfg.guard_rows = 9;
  const auto mh = accuracy_map(fit_encoding(select_and_expand(d.features, high, lags), d.bold, cfg), d.bold);
  const auto ml = accuracy_map(fit_encoding(select_and_expand(d.features, low, lags), d.bold, cfg), d.bold);
  const auto diff = diff_map(mh, ml);
  Index right = 0, counted = 0;
  for (Index v = 0; v < d.bold.n_voxels(); ++v) {
    const double h = d.truth.roi_level[static_cast<std::size_t>(d.truth.voxel_roi[static_cast<std::size_t>(v)])];
    if (h == 0.5) continue;
    ++counted;
    right += (diff.values(v) > 0.0) == (h > 0.5);
  }
  CHECK(static_cast<double>(right) >= 0.8 * static_cast<double>(counted));
}

TEST_CASE("shuffle null: single mode centres on zero and carries the reference scale") {
  const auto d = planted(3, 1.0, 300, 6);
  const auto lags = default_fir_lags();
  const auto null = shuffle_null(d.features, d.bold, small_grid(), lags, 10, 77, NullMode::single);
  CHECK(null.samples.size() == 10);
  CHECK(std::abs(null.mean) <= 3.0 * null.std / std::sqrt(10.0) + 1e-12);
  CHECK(null.reference_std == kReferenceNullStdSingle);
  const auto again = shuffle_null(d.features, d.bold, small_grid(), lags, 10, 77, NullMode::single);
  CHECK(again.samples == null.samples);
  CHECK_THROWS_AS(shuffle_null(d.features, d.bold, small_grid(), lags, 1, 77, NullMode::single), ConfigError);
}

TEST_CASE("shuffle null: difference mode needs a partition") {
  const auto d = planted(4, 1.0, 300, 6);
  const auto lags = default_fir_lags();
  CHECK_THROWS_AS(shuffle_null(d.features, d.bold, small_grid(), lags, 3, 1, NullMode::difference), ConfigError);
  FeaturePartition p;
  p.labels = d.truth.feature_labels;
  p.scores = Vector::Zero(static_cast<Index>(p.labels.size()));
  const auto null = shuffle_null(d.features, d.bold, small_grid(), lags, 4, 1, NullMode::difference, &p);
  CHECK(null.reference_std == kReferenceNullStdDifference);
  CHECK(null.samples.size() == 4);
}

TEST_CASE("roi layer profile: self normalisation, halves and flags") {
  const std::vector<std::int64_t> ids{0, 1, 2, 3};
  const RoiTable rois({{0, "A"}, {1, "A"}, {2, "B"}, {3, "C"}}, ids);
  const AccuracyMap l0{Vector{{0.1, 0.1, 0.2, 0.05}}, ids, {}};
  const AccuracyMap l1{Vector{{0.2, 0.2, 0.2, 0.1}}, ids, {}};
  const AccuracyMap l2{Vector{{0.4, 0.4, 0.1, -0.1}}, ids, {}};
  const auto prof = roi_layer_profile({l0, l1, l2}, rois, 2);
  REQUIRE(prof.size() == 3);
  CHECK(prof[0].roi == "A");
  CHECK(prof[0].curve[2] == 1.0);
  CHECK(prof[0].curve[1] == doctest::Approx(0.5));
  CHECK(prof[1].curve[0] == doctest::Approx(2.0));
  CHECK(prof[2].flagged);
  CHECK(prof[2].curve.empty());
  CHECK_THROWS_AS(roi_layer_profile({l0}, rois, 0), ConfigError);
  CHECK_THROWS_AS(roi_layer_profile({l0, l1}, rois, 2), ConfigError);
}

TEST_CASE("roi layer profile: shallow-driven ROIs plateau, deep-driven ROIs rise") {
  const Index T = 600;
  const Vector fs = oracle::ar1(T, 0.5, 1), fd = oracle::ar1(T, 0.5, 2);
  const auto lags = default_fir_lags();
  // Layer l carries the shallow feature intact and a growing share of the deep one.
  std::vector<Matrix> layers;
  for (int l = 0; l < 4; ++l) {
    const double share = static_cast<double>(l) / 3.0;
    Matrix f(T, 2);
    f.col(0) = fs;
    f.col(1) = share * fd + (1.0 - share) * oracle::ar1(T, 0.5, 10 + static_cast<std::uint64_t>(l));
    layers.push_back(f);
  }
  Matrix y(T, 8);
  for (Index v = 0; v < 8; ++v) {
    const Vector& src = v < 4 ? fs : fd;
    const Vector noise = oracle::random_vector(T, 100 + static_cast<std::uint64_t>(v));
    for (Index t = 0; t < T; ++t) y(t, v) = (t >= 4 ? src(t - 4) : 0.0) + 0.7 * noise(t);
  }
  const BoldMatrix w(y, 1.5);
  std::vector<RoiLabel> labels;
  for (Index v = 0; v < 8; ++v) labels.push_back({v, v < 4 ? "shallow" : "deep"});
  const RoiTable rois(labels, w.voxel_ids);
  std::vector<AccuracyMap> maps;
  for (const auto& f : layers) maps.push_back(accuracy_map(fit_encoding(fir_expand(f, lags), w, small_grid()), w));
  const auto prof = roi_layer_profile(maps, rois, 3);
  const auto& deep = prof[0].roi == "deep" ? prof[0] : prof[1];
  const auto& shallow = prof[0].roi == "deep" ? prof[1] : prof[0];
  for (std::size_t l = 1; l < 4; ++l) CHECK(deep.curve[l] > deep.curve[l - 1]);
  for (double c : shallow.curve) CHECK(c == doctest::Approx(1.0).epsilon(0.05));
}
