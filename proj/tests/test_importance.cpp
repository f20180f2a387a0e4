#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "rbc/features.hpp"
#include "rbc/importance.hpp"

using namespace rbc;
using rbc::test::random_dataset;

namespace {

// Column 0 decides the label (x0 > 0); the remaining columns are noise.
LabeledDataset threshold_dataset(std::size_t n, std::size_t noise, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  ds.n_classes = 2;
  ds.standardized = true;
  for (std::size_t f = 0; f <= noise; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  ds.features = Matrix(n, noise + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f <= noise; ++f) ds.features(i, f) = rng.uniform(-1.0, 1.0);
    // Balanced classes by construction.
    ds.features(i, 0) = (i % 2 ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
    ds.labels.push_back(ds.features(i, 0) > 0.0);
    ds.ids.push_back("t" + std::to_string(i));
  }
  return ds;
}

// Registry-schema data: the first `informative` shape columns and texture
// columns carry the signal.
LabeledDataset registry_dataset(std::size_t n, std::size_t informative, std::uint64_t seed) {
  const auto& reg = FeatureRegistry::instance();
  Rng rng(seed);
  LabeledDataset ds;
  ds.feature_names = reg.names();
  ds.features = Matrix(n, reg.size());
  ds.n_classes = 3;
  ds.standardized = true;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 3);
    for (std::size_t f = 0; f < reg.size(); ++f) ds.features(i, f) = rng.normal();
    for (std::size_t f = 0; f < informative; ++f) {
      ds.features(i, f) += 1.5 * label;
      ds.features(i, kShapeCount + f) += 1.5 * (label == 1);
    }
    ds.labels.push_back(label);
    ds.ids.push_back("c" + std::to_string(i));
  }
  return ds;
}

MemberSpec member(LearnerKind kind, std::string selector, json hp = json::object()) {
  MemberSpec m;
  m.learner = LearnerConfig{kind, std::move(hp), 0};
  m.selector = std::move(selector);
  return m;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("MDI of a single split") {
  auto ds = threshold_dataset(40, 3, 1);
  auto dt = fit_learner(ds, LearnerConfig{LearnerKind::DT, json::object(), 0});
  const auto r = mdi_importance(*dt, ds.feature_names);
  CHECK(r.scores[0] == doctest::Approx(1.0));
  CHECK(r.scores[1] == 0.0);
  CHECK(r.names[r.ranking[0]] == "f0");
  CHECK(r.rank_of("f0") == 1);
  // Zero-score ties keep column order.
  CHECK(r.ranking == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(r.groups[0] == "other");
}

TEST_CASE("MDI: noise features stay small in a forest") {
  auto ds = threshold_dataset(300, 1, 2);
  auto rf = fit_learner(ds, LearnerConfig{LearnerKind::RF, json::object(), 3});
  const auto r = mdi_importance(*rf, ds.feature_names);
  CHECK(sum(r.scores) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.scores[1] < 0.05);
}

TEST_CASE("MDI: duplicated informative column shares the credit") {
  auto ds = threshold_dataset(300, 4, 5);
  auto base = fit_learner(ds, LearnerConfig{LearnerKind::RF, json::object(), 3});
  const double single = mdi_importance(*base, ds.feature_names).scores[0];

  auto dup = ds;
  dup.features = Matrix(ds.size(), ds.dim() + 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t f = 0; f < ds.dim(); ++f) dup.features(i, f) = ds.features(i, f);
    dup.features(i, ds.dim()) = ds.features(i, 0);
  }
  dup.feature_names.push_back("f0_copy");
  auto model = fit_learner(dup, LearnerConfig{LearnerKind::RF, json::object(), 3});
  const auto r = mdi_importance(*model, dup.feature_names);
  const double combined = r.scores[0] + r.scores[ds.dim()];
  CHECK(combined == doctest::Approx(single).epsilon(0.2));
}

TEST_CASE("MDI is invariant under column rescaling") {
  auto ds = random_dataset(120, 5, 3, 9);
  auto scaled = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) scaled.features(i, 2) *= 10.0;
  for (LearnerKind kind : {LearnerKind::DT, LearnerKind::RF}) {
    const LearnerConfig cfg{kind, kind == LearnerKind::RF ? json{{"n_trees", 20}} : json::object(), 4};
    const auto a = mdi_importance(*fit_learner(ds, cfg), ds.feature_names).scores;
    const auto b = mdi_importance(*fit_learner(scaled, cfg), ds.feature_names).scores;
    for (std::size_t f = 0; f < a.size(); ++f) CHECK(a[f] == doctest::Approx(b[f]).epsilon(1e-9));
  }
}

TEST_CASE("MDI rejects non-tree models") {
  auto ds = random_dataset(40, 3, 3, 1);
  auto knn = fit_learner(ds, LearnerConfig{LearnerKind::KNN, json::object(), 0});
  try {
    mdi_importance(*knn, ds.feature_names);
    FAIL("expected Unsupported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Unsupported);
  }
  CHECK_THROWS_AS(mdi_importance(*knn, {"a"}), Error);
}

TEST_CASE("MDI of a specialist ensemble covers the whole schema") {
  auto ds = registry_dataset(150, 4, 3);
  EnsembleSpec spec;
  spec.combiner = Combiner::SoftVote;
  spec.members = {member(LearnerKind::RF, "shape", {{"n_trees", 20}}),
                  member(LearnerKind::ET, "texture", {{"n_trees", 20}})};
  auto ens = fit_voting(ds, spec);
  const auto r = mdi_importance(*ens, ds.feature_names);
  CHECK(sum(r.scores) == doctest::Approx(1.0).epsilon(1e-9));
  for (std::size_t f = kShapeCount + kTextureCount; f < kFeatureCount; ++f) CHECK(r.scores[f] == 0.0);
  CHECK(r.groups[0] == "shape");
  const auto top_shape = r.top("shape", 4);
  CHECK(top_shape.size() == 4);
  for (const auto& name : top_shape) CHECK(FeatureRegistry::instance().index_of(name) < 4);
}

TEST_CASE("permutation importance") {
  auto ds = threshold_dataset(200, 3, 7);
  auto dt = fit_learner(ds, LearnerConfig{LearnerKind::DT, json::object(), 0});

  SUBCASE("unused features score exactly zero") {
    const auto r = permutation_importance(*dt, ds, "accuracy", 5, 1);
    for (std::size_t f = 1; f < ds.dim(); ++f) CHECK(r.scores[f] == 0.0);
    CHECK(r.metric == "accuracy");
  }
  SUBCASE("informative feature drop matches the analytic expectation") {
    // Balanced binary labels: a permuted perfect threshold is right half the time.
    const auto r = permutation_importance(*dt, ds, "accuracy", 50, 2);
    CHECK(r.scores[0] == doctest::Approx(1.0 - 0.5).epsilon(0.1));
  }
  SUBCASE("deterministic given the seed") {
    const auto a = permutation_importance(*dt, ds, "f1_weighted", 3, 11);
    const auto b = permutation_importance(*dt, ds, "f1_weighted", 3, 11);
    CHECK(a.scores == b.scores);
  }
  SUBCASE("unknown metric and bad repeats") {
    CHECK_THROWS_AS(permutation_importance(*dt, ds, "auc", 1, 0), Error);
    CHECK_THROWS_AS(permutation_importance(*dt, ds, "accuracy", 0, 0), Error);
  }
}

TEST_CASE("permutation importance: sign stability across repeat counts") {
  auto ds = random_dataset(200, 6, 3, 13);
  auto rf = fit_learner(ds, LearnerConfig{LearnerKind::RF, {{"n_trees", 30}}, 1});
  const auto one = permutation_importance(*rf, ds, "accuracy", 1, 5);
  const auto ten = permutation_importance(*rf, ds, "accuracy", 10, 5);
  for (std::size_t f = 0; f < ds.dim(); ++f)
    if (std::abs(one.scores[f]) > 0.05 && std::abs(ten.scores[f]) > 0.05)
      CHECK((one.scores[f] > 0) == (ten.scores[f] > 0));
  CHECK(ten.scores[0] > 0.05);
}

TEST_CASE("permutation importance of a constant predictor is zero") {
  auto ds = random_dataset(30, 4, 3, 3);
  // k = n: every query sees the whole training set.
  auto knn = fit_learner(ds, LearnerConfig{LearnerKind::KNN, {{"k", 30}}, 0});
  const auto r = permutation_importance(*knn, ds, "mcc", 4, 1);
  for (double s : r.scores) CHECK(s == 0.0);
}

TEST_CASE("selection rules") {
  CHECK(SelectionRule::parse("mass:0.9").mass == doctest::Approx(0.9));
  const auto top = SelectionRule::parse("top:shape=20,texture=13;drop=color");
  CHECK(top.kind == SelectionRule::Kind::TopK);
  CHECK(top.k.at("shape") == 20);
  CHECK(top.drop_groups == std::vector<std::string>{"color"});
  CHECK(top.describe() == "top:shape=20,texture=13;drop=color");
  CHECK_THROWS_AS(SelectionRule::parse("best:3"), Error);
  CHECK_THROWS_AS(SelectionRule::parse("mass:abc"), Error);
  CHECK_THROWS_AS(SelectionRule::parse("mass:1.5"), Error);

  const auto r = make_report(ImportanceMethod::MDI, {"a", "b", "c", "d"}, {0.1, 0.5, 0.3, 0.1});
  CHECK(apply_rule(r, SelectionRule::cumulative(0.8)) == std::vector<std::string>{"b", "c"});
  CHECK(apply_rule(r, SelectionRule::cumulative(0.85)) == std::vector<std::string>{"a", "b", "c"});
  CHECK(apply_rule(r, SelectionRule::cumulative(1.0)).size() == 4);
  CHECK(apply_rule(r, SelectionRule::top_k({{"other", 3}})) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("report renderings") {
  const auto r = make_report(ImportanceMethod::MDI, {"x", "y"}, {0.25, 0.75});
  CHECK(r.to_csv() == "name,group,score,rank\ny,other,0.750000,1\nx,other,0.250000,2\n");
  CHECK(r.to_json()["features"][0]["name"] == "y");
  CHECK(r.to_markdown().find("| 1 | y (0.750000) |") != std::string::npos);
}

TEST_CASE("select and retrain") {
  auto ds = registry_dataset(240, 5, 21);
  const auto split = dataset_split(ds, 0.25, 3);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.stacking.n_folds = 3;
  spec.seed = 6;
  spec.members = {member(LearnerKind::RF, "shape", {{"n_trees", 40}}),
                  member(LearnerKind::ET, "texture", {{"n_trees", 40}})};

  SUBCASE("keep-all reproduces the full model") {
    auto res = select_and_retrain(spec, split.train, SelectionRule::parse("keep-all"), &split.test);
    CHECK(res.selected.size() == kShapeCount + kTextureCount + kColorCount);
    CHECK(res.reduced->predict_proba(split.test.features).data() ==
          res.full->predict_proba(split.test.features).data());
    CHECK(res.reduced_eval->matrix == res.full_eval->matrix);
  }
  SUBCASE("top-k keeps the requested counts in registry order") {
    auto res = select_and_retrain(spec, split.train, SelectionRule::parse("top:shape=20,texture=13;drop=color"));
    CHECK(res.selected.size() == 33);
    const auto& reg = FeatureRegistry::instance();
    for (std::size_t i = 1; i < res.selected.size(); ++i)
      CHECK(reg.index_of(res.selected[i - 1]) < reg.index_of(res.selected[i]));
    CHECK(res.reduced_spec.members[0].columns.size() == 20);
    CHECK(res.reduced_spec.members[1].columns.size() == 13);
    CHECK(res.reduced->members()[0].label == "RF_shape_20");
  }
  SUBCASE("empty member slice") {
    try {
      select_and_retrain(spec, split.train, SelectionRule::parse("top:shape=0,texture=5"));
      FAIL("expected EmptySelection");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptySelection);
    }
  }
  SUBCASE("non-tree members need the permutation fallback") {
    EnsembleSpec mixed = spec;
    mixed.members[1] = member(LearnerKind::KNN, "texture");
    CHECK_THROWS_AS(select_and_retrain(mixed, split.train, SelectionRule::cumulative(0.95)), Error);
    SelectionOptions opts;
    opts.permutation_fallback = true;
    opts.fallback_repeats = 2;
    auto res = select_and_retrain(mixed, split.train, SelectionRule::cumulative(0.95), nullptr, opts);
    CHECK(res.importance.method == ImportanceMethod::Permutation);
    CHECK_FALSE(res.selected.empty());
  }
}

TEST_CASE("selection on 5 informative + 50 noise features") {
  Rng rng(41);
  LabeledDataset ds;
  ds.n_classes = 3;
  ds.standardized = true;
  for (std::size_t f = 0; f < 55; ++f) ds.feature_names.push_back("v" + std::to_string(f));
  ds.features = Matrix(1500, 55);
  for (std::size_t i = 0; i < 1500; ++i) {
    const int label = static_cast<int>(i % 3);
    for (std::size_t f = 0; f < 55; ++f) ds.features(i, f) = rng.normal();
    for (std::size_t f = 0; f < 5; ++f) ds.features(i, f) += (f % 2 ? 1.2 : -1.2) * (label - 1) + 0.8 * (label == 1);
    ds.labels.push_back(label);
    ds.ids.push_back("n" + std::to_string(i));
  }
  const auto split = dataset_split(ds, 0.4, 8);
  EnsembleSpec spec;
  spec.combiner = Combiner::SoftVote;
  spec.seed = 2;
  spec.members = {member(LearnerKind::RF, "all", {{"n_trees", 100}})};
  auto res = select_and_retrain(spec, split.train, SelectionRule::cumulative(0.7), &split.test);
  CHECK(res.selected.size() <= 15);
  for (std::size_t f = 0; f < 5; ++f)
    CHECK(std::find(res.selected.begin(), res.selected.end(), "v" + std::to_string(f)) != res.selected.end());
  CHECK(res.reduced_eval->suite.accuracy >= res.full_eval->suite.accuracy - 0.01);
}
