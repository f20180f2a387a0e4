#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rbc/learners.hpp"
#include "rbc/metrics.hpp"
#include "rbc/parallel.hpp"

using namespace rbc;
using rbc::test::blobs;
using rbc::test::random_dataset;

namespace {

LabeledDataset from_rows(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys, int classes = 2) {
  LabeledDataset ds;
  for (std::size_t f = 0; f < xs[0].size(); ++f) ds.feature_names.push_back("f" + std::to_string(f));
  ds.features = Matrix(0, xs[0].size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ds.features.append_row(xs[i]);
    ds.labels.push_back(ys[i]);
    ds.ids.push_back("p" + std::to_string(i));
  }
  ds.n_classes = classes;
  ds.standardized = true;
  return ds;
}

LearnerConfig config(LearnerKind kind, json hp = json::object(), std::uint64_t seed = 7) {
  return LearnerConfig{kind, std::move(hp), seed};
}

double train_accuracy(const Classifier& m, const LabeledDataset& ds) { return evaluate(m, ds).suite.accuracy; }

json cheap(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::RF:
    case LearnerKind::ET:
      return {{"n_trees", 15}};
    case LearnerKind::GB:
      return {{"n_rounds", 15}};
    case LearnerKind::MLP:
      return {{"epochs", 15}, {"hidden_units", 16}};
    case LearnerKind::SVM:
      return {{"epochs", 5}};
    default:
      return json::object();
  }
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config(LearnerKind::DT, {{"max_dept", 3}}).resolved(), Error);
  CHECK_THROWS_AS(config(LearnerKind::GB, {{"learning_rate", 0.0}}).resolved(), Error);
  CHECK_THROWS_AS(config(LearnerKind::GB, {{"learning_rate", 1.5}}).resolved(), Error);
  CHECK_THROWS_AS(config(LearnerKind::RF, {{"n_trees", 0}}).resolved(), Error);
  CHECK_THROWS_AS(config(LearnerKind::SVM, {{"kernel", "poly"}}).resolved(), Error);
  CHECK(config(LearnerKind::RF).resolved()["max_features"] == "sqrt");
  CHECK(parse_kind("knn") == LearnerKind::KNN);
  CHECK_THROWS_AS(parse_kind("xgb"), Error);
  auto ds = random_dataset(30, 4, 3, 1);
  CHECK_THROWS_AS(fit_learner(ds, config(LearnerKind::RF, {{"max_features", 5}})), Error);
}

TEST_CASE("config JSON: flat hyperparameter shorthand") {
  const auto flat = LearnerConfig::from_json({{"kind", "RF"}, {"n_trees", 9}, {"seed", 4}});
  CHECK(flat.resolved()["n_trees"] == 9);
  CHECK(flat.seed == 4);
  const auto nested = LearnerConfig::from_json({{"kind", "RF"}, {"hyperparameters", {{"n_trees", 9}}}, {"seed", 4}});
  CHECK(flat.to_json() == nested.to_json());
  CHECK_THROWS_AS(LearnerConfig::from_json({{"kind", "RF"}, {"group", "shape"}}), Error);
  CHECK_THROWS_AS(LearnerConfig::from_json({{"kind", "RF"}, {"n_trees", 3}, {"hyperparameters", {{"n_trees", 4}}}}),
                  Error);
}

TEST_CASE("decision tree: 1-D threshold") {
  auto ds = from_rows({{-3}, {-2}, {-1}, {-0.5}, {0.5}, {1}, {2}, {3}}, {0, 0, 0, 0, 1, 1, 1, 1});
  auto m = fit_decision_tree(ds, config(LearnerKind::DT));
  CHECK(m->tree().nodes.size() == 3);
  CHECK(m->tree().nodes[0].threshold == doctest::Approx(0.0));
  CHECK(train_accuracy(*m, ds) == 1.0);
}

TEST_CASE("decision tree: pure data is a single leaf") {
  auto ds = from_rows({{1, 2}, {3, 4}, {5, 6}}, {2, 2, 2}, 3);
  auto m = fit_decision_tree(ds, config(LearnerKind::DT));
  CHECK(m->tree().nodes.size() == 1);
  std::vector<double> p(3);
  m->predict_proba(std::vector<double>{0, 0}, p);
  CHECK(p[2] == 1.0);
}

TEST_CASE("decision tree: XOR") {
  auto ds = from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0, 1, 1, 0});
  auto m = fit_decision_tree(ds, config(LearnerKind::DT, {{"max_depth", 2}}));
  CHECK(train_accuracy(*m, ds) == 1.0);
}

TEST_CASE("decision tree: split ties go to the lowest feature index") {
  auto ds = from_rows({{0, 0}, {0, 0}, {1, 1}, {1, 1}}, {0, 0, 1, 1});
  auto m = fit_decision_tree(ds, config(LearnerKind::DT));
  CHECK(m->tree().nodes[0].feature == 0);
}

TEST_CASE("decision tree output does not depend on sample order") {
  auto ds = random_dataset(120, 5, 3, 3);
  auto order = iota_indices(ds.size());
  Rng rng(1);
  rng.shuffle(order);
  auto a = fit_decision_tree(ds, config(LearnerKind::DT));
  auto b = fit_decision_tree(ds.subset(order), config(LearnerKind::DT));
  auto probe = random_dataset(200, 5, 3, 99);
  CHECK(a->predict_proba(probe.features).data() == b->predict_proba(probe.features).data());
}

TEST_CASE("forest of one full tree equals the decision tree") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto ds = random_dataset(80, 6, 3, 100 + s);
    auto dt = fit_decision_tree(ds, config(LearnerKind::DT, {{"max_depth", nullptr}}, s));
    auto rf = fit_forest(ds, config(LearnerKind::RF,
                                    {{"n_trees", 1}, {"bootstrap", false}, {"max_features", "all"}, {"max_depth", nullptr}},
                                    s + 50));
    auto probe = random_dataset(100, 6, 3, 500 + s);
    CHECK(dt->predict(probe.features) == rf->predict(probe.features));
  }
}

TEST_CASE("random forest on separated blobs") {
  auto train = blobs(100, 2, 2, 3.0, 1);
  auto test = blobs(100, 2, 2, 3.0, 2);
  auto rf = fit_forest(train, config(LearnerKind::RF, {{"n_trees", 50}}));
  CHECK(evaluate(*rf, test).suite.accuracy >= 0.95);
  auto et = fit_forest(train, config(LearnerKind::ET, {{"n_trees", 50}}));
  CHECK(evaluate(*et, test).suite.accuracy >= 0.95);
}

TEST_CASE("extra trees draw thresholds inside the node range") {
  auto ds = random_dataset(60, 3, 3, 8);
  auto et = fit_forest(ds, config(LearnerKind::ET, {{"n_trees", 3}, {"max_features", "all"}}));
  for (const auto& tree : et->trees())
    for (const auto& node : tree.nodes)
      if (node.feature >= 0) CHECK(std::isfinite(node.threshold));
  // Different per-tree seeds give different trees.
  CHECK(et->trees()[0].nodes[0].threshold != et->trees()[1].nodes[0].threshold);
}

TEST_CASE("gradient boosting log-loss is non-increasing") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto ds = random_dataset(100, 4, 3, 40 + s);
    auto gb = fit_gradient_boosting(ds, config(LearnerKind::GB, {{"n_rounds", 60}, {"learning_rate", 0.05}}, s));
    const auto& loss = gb->training_loss;
    REQUIRE(loss.size() == 61);
    for (std::size_t i = 1; i < loss.size(); ++i) CHECK(loss[i] <= loss[i - 1] + 1e-12);
  }
}

TEST_CASE("gradient boosting: single class and threshold data") {
  auto single = from_rows({{1}, {2}, {3}}, {1, 1, 1}, 3);
  auto gb = fit_gradient_boosting(single, config(LearnerKind::GB, {{"n_rounds", 5}}));
  std::vector<double> p(3);
  gb->predict_proba(std::vector<double>{2}, p);
  CHECK(p[1] > 1.0 - 1e-9);
  CHECK(gb->training_loss.back() < 1e-9);

  auto thr = from_rows({{-2}, {-1.5}, {-1}, {-0.2}, {0.3}, {1}, {1.4}, {2}}, {0, 0, 0, 0, 1, 1, 1, 1});
  auto gb2 = fit_gradient_boosting(thr, config(LearnerKind::GB, {{"n_rounds", 20}, {"max_depth", 1}}));
  CHECK(train_accuracy(*gb2, thr) == 1.0);
}

TEST_CASE("gradient boosting with a tiny learning rate stays at the prior") {
  auto ds = random_dataset(90, 3, 3, 12);
  auto gb = fit_gradient_boosting(ds, config(LearnerKind::GB, {{"n_rounds", 1}, {"learning_rate", 1e-3}}));
  const auto counts = ds.class_counts();
  std::vector<double> p(3);
  gb->predict_proba(ds.features.row(0), p);
  double kl = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double prior = static_cast<double>(counts[c]) / static_cast<double>(ds.size());
    kl += prior * std::log(prior / p[c]);
  }
  CHECK(kl < 0.01);
}

TEST_CASE("kNN: k=1 resubstitution and tie-break") {
  auto ds = random_dataset(50, 3, 3, 4);
  auto knn = fit_knn(ds, config(LearnerKind::KNN, {{"k", 1}}));
  CHECK(train_accuracy(*knn, ds) == 1.0);
  auto tie = from_rows({{1}, {-1}, {3}}, {0, 1, 1});
  auto m = fit_knn(tie, config(LearnerKind::KNN, {{"k", 1}}));
  CHECK(m->neighbors(std::vector<double>{0.0})[0] == 0);
  CHECK_THROWS_AS(fit_knn(tie, config(LearnerKind::KNN, {{"k", 4}})), Error);
}

TEST_CASE("scale-sensitive learners require standardized data") {
  auto ds = random_dataset(30, 3, 3, 4);
  ds.standardized = false;
  CHECK_THROWS_AS(fit_knn(ds, config(LearnerKind::KNN)), Error);
  CHECK_THROWS_AS(fit_svm(ds, config(LearnerKind::SVM)), Error);
  CHECK_THROWS_AS(fit_mlp(ds, config(LearnerKind::MLP)), Error);
  CHECK_NOTHROW(fit_knn(ds, config(LearnerKind::KNN, {{"force", true}})));
}

TEST_CASE("linear SVM on separable blobs agrees with the analytic separator") {
  // Classes split by the line x0 + x1 = 0 with a clear gap.
  Rng rng(3);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(0.6, 3.0);
    const int label = i % 2;
    const double sign = label == 0 ? 1.0 : -1.0;
    xs.push_back({(sign * b + a) / std::sqrt(2.0), (sign * b - a) / std::sqrt(2.0)});
    ys.push_back(label);
  }
  auto train = from_rows(std::vector<std::vector<double>>(xs.begin(), xs.begin() + 120),
                         std::vector<int>(ys.begin(), ys.begin() + 120));
  auto test = from_rows(std::vector<std::vector<double>>(xs.begin() + 120, xs.end()),
                        std::vector<int>(ys.begin() + 120, ys.end()));
  auto svm = fit_svm(train, config(LearnerKind::SVM, {{"kernel", "linear"}, {"C", 10.0}}));
  CHECK(evaluate(*svm, test).suite.accuracy >= 0.98);
  std::vector<double> margin(2);
  for (std::size_t i = 0; i < test.size(); ++i) {
    svm->decision_function(test.features.row(i), margin);
    const double analytic = test.features(i, 0) + test.features(i, 1);
    CHECK((margin[0] > 0) == (analytic > 0));
  }
}

TEST_CASE("RBF SVM on blobs") {
  auto train = blobs(60, 3, 4, 3.0, 5);
  auto test = blobs(60, 3, 4, 3.0, 6);
  auto svm = fit_svm(train, config(LearnerKind::SVM));
  CHECK(evaluate(*svm, test).suite.accuracy >= 0.9);
}

TEST_CASE("MLP backprop matches central finite differences") {
  auto ds = random_dataset(10, 5, 3, 21);
  MlpNetwork net;
  net.inputs = 5;
  net.hidden = 7;
  net.outputs = 3;
  Rng rng(2);
  net.params.resize(net.param_count());
  for (double& p : net.params) p = rng.uniform(-0.8, 0.8);
  std::vector<double> w(10, 1.0);
  w[3] = 2.5;
  auto rows = iota_indices(10);
  std::vector<double> grad(net.param_count());
  net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, grad);
  double worst = 0.0;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const double h = 1e-6, orig = net.params[i];
    net.params[i] = orig + h;
    const double up = net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, {});
    net.params[i] = orig - h;
    const double down = net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, {});
    net.params[i] = orig;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - grad[i]) / std::max(1e-8, std::abs(fd) + std::abs(grad[i]));
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("MLP and logistic regression learn blobs") {
  auto train = blobs(80, 3, 4, 3.0, 7);
  auto test = blobs(80, 3, 4, 3.0, 8);
  auto mlp = fit_mlp(train, config(LearnerKind::MLP, {{"epochs", 60}}));
  CHECK(evaluate(*mlp, test).suite.accuracy >= 0.9);
  auto lr = fit_logreg(train, config(LearnerKind::LOGREG));
  CHECK(lr->converged());
  CHECK(evaluate(*lr, test).suite.accuracy >= 0.9);
}

TEST_CASE("every learner: probabilities sum to one, argmax agrees, JSON round trip is exact") {
  auto train = random_dataset(90, 5, 3, 31);
  auto probe = random_dataset(60, 5, 3, 32);
  for (auto kind : {LearnerKind::DT, LearnerKind::ET, LearnerKind::RF, LearnerKind::GB, LearnerKind::SVM,
                    LearnerKind::KNN, LearnerKind::MLP, LearnerKind::LOGREG}) {
    CAPTURE(std::string(kind_name(kind)));
    auto m = fit_learner(train, config(kind, cheap(kind)));
    auto p = m->predict_proba(probe.features);
    auto labels = m->predict(probe.features);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      CHECK(std::abs(s - 1.0) < 1e-9);
      CHECK(labels[i] == argmax(p.row(i)));
    }
    auto restored = learner_from_json(json::parse(m->to_json().dump()));
    CHECK(restored->predict_proba(probe.features).data() == p.data());
    CHECK(restored->to_json() == m->to_json());
    auto again = fit_learner(train, config(kind, cheap(kind)));
    CHECK(again->predict_proba(probe.features).data() == p.data());
  }
}

TEST_CASE("stochastic learners are identical across thread counts") {
  auto train = random_dataset(120, 6, 3, 61);
  auto probe = random_dataset(80, 6, 3, 62);
  for (auto kind : {LearnerKind::ET, LearnerKind::RF, LearnerKind::GB, LearnerKind::SVM, LearnerKind::MLP}) {
    CAPTURE(std::string(kind_name(kind)));
    std::vector<std::vector<double>> outs;
    for (int threads : {1, 2, 8}) {
      set_thread_count(threads);
      outs.push_back(fit_learner(train, config(kind, cheap(kind)))->predict_proba(probe.features).data());
    }
    set_thread_count(0);
    CHECK(outs[0] == outs[1]);
    CHECK(outs[0] == outs[2]);
  }
}

TEST_CASE("MDI of a single split") {
  auto ds = from_rows({{0, 5}, {0, 3}, {1, 4}, {1, 6}}, {0, 0, 1, 1});
  auto dt = fit_decision_tree(ds, config(LearnerKind::DT));
  auto imp = *dt->impurity_importance();
  CHECK(imp[0] == 1.0);
  CHECK(imp[1] == 0.0);
  CHECK_FALSE(fit_knn(ds, config(LearnerKind::KNN, {{"k", 1}}))->impurity_importance().has_value());
}

TEST_CASE("balanced class weights") {
  auto ds = from_rows({{0}, {0}, {0}, {1}}, {0, 0, 0, 1});
  auto w = class_sample_weights(ds, "balanced");
  CHECK(w[0] == doctest::Approx(4.0 / 6.0));
  CHECK(w[3] == doctest::Approx(2.0));
  auto m = fit_decision_tree(ds, config(LearnerKind::DT, {{"class_weight", "balanced"}}));
  CHECK(train_accuracy(*m, ds) == 1.0);
}
