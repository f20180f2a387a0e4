#include "doctest.h"
#include "helpers.hpp"
#include "rbc/ensemble.hpp"
#include "rbc/features.hpp"
#include "rbc/metrics.hpp"
#include "rbc/parallel.hpp"

using namespace rbc;
using rbc::test::blobs;
using rbc::test::random_dataset;

namespace {

MemberSpec member(LearnerKind kind, std::string selector = "all", json hp = json::object()) {
  MemberSpec m;
  m.learner = LearnerConfig{kind, std::move(hp), 0};
  m.selector = std::move(selector);
  return m;
}

// Dataset over the full 121-column registry schema; labels depend on one
// shape and one texture column.
LabeledDataset registry_dataset(std::size_t n, std::uint64_t seed) {
  const auto& reg = FeatureRegistry::instance();
  Rng rng(seed);
  LabeledDataset ds;
  ds.feature_names = reg.names();
  ds.features = Matrix(n, reg.size());
  ds.n_classes = 3;
  ds.standardized = true;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < reg.size(); ++f) ds.features(i, f) = rng.normal();
    const double s = ds.features(i, 0) + ds.features(i, kShapeCount);
    ds.labels.push_back(s < -0.5 ? 0 : (s < 0.5 ? 1 : 2));
    ds.ids.push_back("c" + std::to_string(i));
  }
  return ds;
}

}  // namespace

TEST_CASE("combiner names and spec JSON") {
  CHECK(parse_combiner("hard") == Combiner::HardVote);
  CHECK(parse_combiner("Soft_Vote") == Combiner::SoftVote);
  CHECK(parse_combiner("stacking") == Combiner::Stacking);
  CHECK_THROWS_AS(parse_combiner("bagging"), Error);

  EnsembleSpec spec;
  spec.members = {member(LearnerKind::RF, "shape", {{"n_trees", 7}}), member(LearnerKind::ET, "texture")};
  spec.combiner = Combiner::Stacking;
  spec.stacking.n_folds = 3;
  spec.stacking.probabilities = false;
  spec.seed = 11;
  const auto back = EnsembleSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(back.members[0].selector == "shape");
  CHECK(back.members[0].label() == "RF_shape");
  CHECK_FALSE(back.stacking.probabilities);

  json alias = {{"combiner", "soft"}, {"members", {{{"kind", "KNN"}, {"group", "TEXTURE"}}}}};
  CHECK(EnsembleSpec::from_json(alias).members[0].selector == "texture");

  json flat = {{"members", {{{"kind", "RF"}, {"group", "shape"}, {"n_trees", 5}}}}};
  CHECK(EnsembleSpec::from_json(flat).members[0].learner.resolved()["n_trees"] == 5);
  flat["combiners"] = "soft";
  CHECK_THROWS_AS(EnsembleSpec::from_json(flat), Error);
}

TEST_CASE("spec validation") {
  EnsembleSpec spec;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.members = {member(LearnerKind::DT), member(LearnerKind::KNN)};
  spec.weights = {1.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.weights = {0.0, 0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.weights = {-1.0, 2.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.weights = {1.0, 0.0};
  CHECK_NOTHROW(spec.validate());
  spec.members.push_back(member(LearnerKind::DT, "hue"));
  spec.weights.clear();
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.members.pop_back();
  spec.replication_mode = true;
  for (int i = 0; i < 6; ++i) spec.members.push_back(member(LearnerKind::DT));
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("column selection") {
  const auto& reg = FeatureRegistry::instance();
  CHECK(select_columns(member(LearnerKind::DT, "shape"), reg.names()).size() == kShapeCount);
  const auto tex = select_columns(member(LearnerKind::DT, "texture"), reg.names());
  CHECK(tex.size() == kTextureCount);
  CHECK(tex.front() == kShapeCount);
  CHECK(select_columns(member(LearnerKind::DT, "color"), reg.names()).back() == kFeatureCount - 1);

  MemberSpec explicit_cols = member(LearnerKind::DT);
  explicit_cols.columns = {reg.names()[5], reg.names()[2]};
  CHECK(select_columns(explicit_cols, reg.names()) == std::vector<std::size_t>{2, 5});
  explicit_cols.columns = {"no_such_feature"};
  CHECK_THROWS_AS(select_columns(explicit_cols, reg.names()), Error);

  // Group selectors need registry names; a group with no columns is an error.
  const std::vector<std::string> custom = {"a", "b"};
  CHECK_THROWS_AS(select_columns(member(LearnerKind::DT, "shape"), custom), Error);
  const std::vector<std::string> shape_only(reg.names().begin(), reg.names().begin() + kShapeCount);
  try {
    select_columns(member(LearnerKind::DT, "color"), shape_only);
    FAIL("expected EmptySelection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySelection);
  }
}

TEST_CASE("member seeds ignore the order of distinct members") {
  EnsembleSpec a;
  a.seed = 3;
  a.members = {member(LearnerKind::RF), member(LearnerKind::ET), member(LearnerKind::RF)};
  EnsembleSpec b = a;
  b.members = {member(LearnerKind::ET), member(LearnerKind::RF), member(LearnerKind::RF)};
  CHECK(member_seed(a, 0) == member_seed(b, 1));
  CHECK(member_seed(a, 1) == member_seed(b, 0));
  CHECK(member_seed(a, 2) == member_seed(b, 2));
  CHECK(member_seed(a, 0) != member_seed(a, 2));
}

TEST_CASE("vote arithmetic") {
  const std::vector<std::vector<double>> five = {
      {0.9, 0.05, 0.05}, {0.8, 0.1, 0.1}, {0.1, 0.6, 0.3}, {0.2, 0.45, 0.35}, {0.3, 0.4, 0.3}};
  // Three members vote class 1, so the plurality wins despite the mass on class 0.
  CHECK(vote_label(Combiner::HardVote, five, {}) == 1);
  CHECK(vote(Combiner::HardVote, five, {}) == std::vector<double>{0.4, 0.6, 0.0});
  CHECK(vote_label(Combiner::SoftVote, five, {}) == 0);

  // 1-1 tie between classes 0 and 2 resolved by summed probability.
  const std::vector<std::vector<double>> tie = {{0.5, 0.1, 0.4}, {0.05, 0.0, 0.95}};
  CHECK(vote_label(Combiner::HardVote, tie, {}) == 2);
  // Exact tie in both votes and mass falls back to class order.
  const std::vector<std::vector<double>> flat = {{0.6, 0.4, 0.0}, {0.4, 0.6, 0.0}};
  CHECK(vote_label(Combiner::HardVote, flat, {}) == 0);
  // Weights shift the plurality.
  CHECK(vote_label(Combiner::HardVote, tie, {3.0, 1.0}) == 0);
  const auto w = vote(Combiner::SoftVote, tie, {1.0, 0.0});
  CHECK(w == tie[0]);
}

TEST_CASE("voting of identical members equals the single member") {
  auto ds = random_dataset(90, 5, 3, 21);
  LearnerConfig dt{LearnerKind::DT, {{"max_depth", 4}}, 0};
  EnsembleSpec spec;
  spec.members = {MemberSpec{dt}, MemberSpec{dt}, MemberSpec{dt}};
  auto single = fit_learner(ds, dt);
  for (Combiner c : {Combiner::HardVote, Combiner::SoftVote}) {
    spec.combiner = c;
    auto ens = fit_voting(ds, spec);
    CHECK(ens->predict(ds.features) == single->predict(ds.features));
  }
  spec.combiner = Combiner::SoftVote;
  spec.members.resize(1);
  auto one = fit_voting(ds, spec);
  CHECK(one->predict_proba(ds.features).data() == single->predict_proba(ds.features).data());
}

TEST_CASE("zero weight removes a member exactly") {
  auto ds = random_dataset(80, 4, 3, 5);
  EnsembleSpec spec;
  spec.combiner = Combiner::SoftVote;
  spec.seed = 9;
  spec.members = {member(LearnerKind::KNN), member(LearnerKind::DT, "all", {{"max_depth", 3}})};
  spec.weights = {1.0, 0.0};
  auto ens = fit_voting(ds, spec);
  const auto& m0 = *ens->members()[0].model;
  CHECK(ens->predict_proba(ds.features).data() == m0.predict_proba(ds.features).data());
}

TEST_CASE("stacking meta-features: width and out-of-fold protocol") {
  auto ds = random_dataset(100, 6, 3, 17);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.seed = 4;
  spec.members = {member(LearnerKind::DT, "all", {{"max_depth", 3}}), member(LearnerKind::KNN),
                  member(LearnerKind::RF, "all", {{"n_trees", 5}})};
  StackingDiagnostics diag;
  auto ens = fit_stacking(ds, spec, &diag);
  CHECK(ens->meta_width() == 3 * 3);
  CHECK(ens->meta()->n_features() == 9);
  CHECK(diag.meta_features.cols() == 9);
  CHECK(ens->meta_features(ds.features.row(0)).size() == 9);

  // No sample's meta-features come from a member fitted on that sample.
  REQUIRE(diag.train_rows.size() == 5);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rows = diag.train_rows[static_cast<std::size_t>(diag.fold_of[i])];
    CHECK_FALSE(std::binary_search(rows.begin(), rows.end(), i));
  }
  // Each out-of-fold row is a probability vector.
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t m = 0; m < 3; ++m) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += diag.meta_features(i, m * 3 + c);
      CHECK(s == doctest::Approx(1.0));
    }

  spec.stacking.probabilities = false;
  auto labels = fit_stacking(ds, spec);
  CHECK(labels->meta_width() == 3);
}

TEST_CASE("stacking copies an oracle member") {
  // Column 0 is the label itself; the DT member on it is a perfect oracle.
  auto ds = random_dataset(60, 3, 3, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.features(i, 0) = ds.labels[i];
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  MemberSpec oracle = member(LearnerKind::DT);
  oracle.columns = {"f0"};
  MemberSpec noise = member(LearnerKind::KNN);
  noise.columns = {"f1", "f2"};
  spec.members = {oracle, noise};
  auto ens = fit_stacking(ds, spec);
  CHECK(evaluate(*ens, ds).suite.accuracy == 1.0);
}

TEST_CASE("stacking needs enough samples per class") {
  auto ds = blobs(3, 3, 2, 4.0, 1);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.members = {member(LearnerKind::DT), member(LearnerKind::KNN, "all", {{"k", 1}})};
  CHECK_THROWS_AS(fit_stacking(ds, spec), Error);
  spec.stacking.n_folds = 3;
  CHECK_NOTHROW(fit_stacking(ds, spec));
}

TEST_CASE("specialists ignore columns outside their group") {
  auto ds = registry_dataset(120, 8);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.stacking.n_folds = 3;
  spec.members = {member(LearnerKind::RF, "shape", {{"n_trees", 10}}),
                  member(LearnerKind::ET, "texture", {{"n_trees", 10}})};
  auto ens = fit_stacking(ds, spec);
  const auto shape = select_columns(spec.members[0], ds.feature_names);
  const auto texture = select_columns(spec.members[1], ds.feature_names);

  Rng rng(77);
  std::vector<double> base(kFeatureCount), fuzzed(kFeatureCount), p0(3), p1(3);
  for (int trial = 0; trial < 200; ++trial) {
    for (auto& v : base) v = rng.normal();
    fuzzed = base;
    // Scramble everything except the shape and texture slots.
    for (std::size_t f = kShapeCount + kTextureCount; f < kFeatureCount; ++f) fuzzed[f] = 1e6 * rng.normal();
    ens->predict_proba(base, p0);
    ens->predict_proba(fuzzed, p1);
    CHECK(p0 == p1);

    // The shape member alone sees only the shape slots.
    fuzzed = base;
    for (std::size_t f = kShapeCount; f < kFeatureCount; ++f) fuzzed[f] = 1e6 * rng.normal();
    const auto& m0 = ens->members()[0];
    std::vector<double> a(shape.size()), b(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
      a[i] = base[shape[i]];
      b[i] = fuzzed[shape[i]];
    }
    m0.model->predict_proba(a, p0);
    m0.model->predict_proba(b, p1);
    CHECK(p0 == p1);
  }
  CHECK(texture.front() == kShapeCount);
}

TEST_CASE("ensemble JSON round trip and thread determinism") {
  auto ds = random_dataset(90, 5, 3, 31);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.seed = 12;
  spec.members = {member(LearnerKind::ET, "all", {{"n_trees", 6}}),
                  member(LearnerKind::MLP, "all", {{"epochs", 10}, {"hidden_units", 8}})};
  set_thread_count(1);
  auto a = fit_ensemble(ds, spec);
  set_thread_count(4);
  auto b = fit_ensemble(ds, spec);
  set_thread_count(0);
  CHECK(a->to_json() == b->to_json());

  auto restored = classifier_from_json(a->to_json());
  CHECK(restored->kind_name() == "ENSEMBLE");
  CHECK(restored->predict_proba(ds.features).data() == a->predict_proba(ds.features).data());

  spec.combiner = Combiner::HardVote;
  spec.weights = {2.0, 1.0};
  auto v = fit_ensemble(ds, spec);
  auto vr = classifier_from_json(v->to_json());
  CHECK(vr->predict(ds.features) == v->predict(ds.features));
}

TEST_CASE("member errors name the member") {
  auto ds = random_dataset(30, 3, 3, 1);
  EnsembleSpec spec;
  spec.combiner = Combiner::SoftVote;
  spec.members = {member(LearnerKind::DT), member(LearnerKind::KNN, "all", {{"k", 500}})};
  try {
    fit_voting(ds, spec);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("member 1 (KNN)") != std::string::npos);
  }
}
