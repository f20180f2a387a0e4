// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "rbc/ensemble.hpp"
#include "rbc/experiments.hpp"
#include "rbc/features.hpp"
#include "rbc/fixtures.hpp"
#include "rbc/imaging.hpp"
#include "rbc/io.hpp"
#include "rbc/learners.hpp"
#include "rbc/metrics.hpp"
#include "rbc/model.hpp"
#include "rbc/parallel.hpp"
#include "rbc/synth.hpp"

using namespace rbc;
using rbc::test::disk_mask;
using rbc::test::random_dataset;
using rbc::test::rotate90;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed sub-checks of one criterion.
struct Outcome {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

LearnerConfig config(LearnerKind kind, json hp = json::object(), std::uint64_t seed = 7) {
  return LearnerConfig{kind, std::move(hp), seed};
}

MemberSpec member(LearnerKind kind, std::string selector = "all", json hp = json::object()) {
  MemberSpec m;
  m.learner = config(kind, std::move(hp), 0);
  m.selector = std::move(selector);
  return m;
}

// ---------------------------------------------------------------- 1 and 2 --

void sds_fixtures(Outcome& out) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& fx : reference_fixtures()) {
    const double got = 100.0 * sds_score(ConfusionMatrix(fx.matrix));
    const double err = std::abs(got - fx.sds_percent);
    worst = std::max(worst, err);
    out.expect(err <= 0.005, fx.label + ": " + fmt(got) + " vs " + fmt(fx.sds_percent, 2));
  }
  const double elapsed = seconds_since(t0);
  out.expect(elapsed < 1.0, "took " + fmt(elapsed, 3) + " s");
  out.detail << reference_fixtures().size() << " matrices, max |error| " << fmt(worst, 5) << " pp, "
             << fmt(elapsed * 1e3, 3) << " ms";
}

void f1_fixtures(Outcome& out) {
  int gated = 0;
  double worst = 0.0;
  for (const auto& fx : reference_fixtures()) {
    if (!fx.f1_gated) continue;
    ++gated;
    const double got = 100.0 * f1_scores(ConfusionMatrix(fx.matrix)).weighted;
    const double err = std::abs(got - fx.f1_percent);
    worst = std::max(worst, err);
    out.expect(err <= 1.0, fx.label + ": " + fmt(got, 2) + " vs " + fmt(fx.f1_percent, 2));
  }
  out.expect(gated == 4, "expected 4 gated fixtures");
  out.detail << gated << " matrices, max |error| " << fmt(worst, 3) << " pp (weighted F1)";
}

// -------------------------------------------------------------------- 3 --

// Scores recomputed from the expanded (truth, prediction) label stream.
struct NaiveScores {
  double accuracy, sds, f1_macro, f1_weighted, cba, mcc;
};

NaiveScores naive_scores(const ConfusionMatrix& cm) {
  const int k = cm.k();
  std::vector<int> truth, pred;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      for (std::int64_t n = 0; n < cm(i, j); ++n) {
        truth.push_back(i);
        pred.push_back(j);
      }
  const double n = static_cast<double>(truth.size());
  NaiveScores s{};
  double hits = 0, merged_hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    hits += truth[i] == pred[i];
    merged_hits += (truth[i] == 0) == (pred[i] == 0);
  }
  s.accuracy = hits / n;
  s.sds = merged_hits / n;
  for (int c = 0; c < k; ++c) {
    double tp = 0, t = 0, p = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      t += truth[i] == c;
      p += pred[i] == c;
    }
    const double precision = p > 0 ? tp / p : 0.0;
    const double recall = t > 0 ? tp / t : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    s.f1_macro += f1 / k;
    s.f1_weighted += f1 * t / n;
    s.cba += std::max(t, p) > 0 ? tp / std::max(t, p) / k : 0.0;
  }
  // Gorodkin R_k as a correlation of one-hot indicator matrices.
  std::vector<double> mt(static_cast<std::size_t>(k)), mp(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mt[static_cast<std::size_t>(truth[i])] += 1.0 / n;
    mp[static_cast<std::size_t>(pred[i])] += 1.0 / n;
  }
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (int c = 0; c < k; ++c) {
      const double x = (truth[i] == c) - mt[static_cast<std::size_t>(c)];
      const double y = (pred[i] == c) - mp[static_cast<std::size_t>(c)];
      xy += x * y;
      xx += x * x;
      yy += y * y;
    }
  s.mcc = xx > 0 && yy > 0 ? xy / std::sqrt(xx * yy) : 0.0;
  return s;
}

void metric_properties(Outcome& out) {
  Rng rng(20240611);
  int trials = 0, sds_equal = 0;
  double worst_oracle = 0.0;
  for (; trials < 10000; ++trials) {
    std::vector<std::vector<std::int64_t>> rows(3, std::vector<std::int64_t>(3));
    // Mix sparse and dense matrices so the equality branch is exercised.
    const std::uint64_t range = trials % 3 == 0 ? 4 : 30;
    for (auto& r : rows)
      for (auto& v : r) v = static_cast<std::int64_t>(rng.below(range));
    rows[0][0] += 1;
    const ConfusionMatrix cm(rows);
    const auto s = compute_suite(cm);
    const bool equal_expected = cm(1, 2) == 0 && cm(2, 1) == 0;
    sds_equal += equal_expected;
    if (s.sds < s.accuracy) out.expect(false, "sds < accuracy at trial " + std::to_string(trials));
    if ((s.sds == s.accuracy) != equal_expected)
      out.expect(false, "sds/accuracy equality rule at trial " + std::to_string(trials));
    if (std::abs(s.f1_micro - s.accuracy) > 1e-12) out.expect(false, "micro-F1 != accuracy");
    const auto o = naive_scores(cm);
    for (double d : {o.accuracy - s.accuracy, o.sds - s.sds, o.f1_macro - s.f1_macro,
                     o.f1_weighted - s.f1_weighted, o.cba - s.cba, o.mcc - s.mcc})
      worst_oracle = std::max(worst_oracle, std::abs(d));
  }
  out.expect(worst_oracle <= 1e-12, "oracle deviation " + std::to_string(worst_oracle));
  out.expect(sds_equal > 100, "equality branch rarely exercised");

  const double perfect = mcc(ConfusionMatrix({{40, 0, 0}, {0, 25, 0}, {0, 0, 9}}));
  const double uniform = mcc(ConfusionMatrix({{7, 7, 7}, {7, 7, 7}, {7, 7, 7}}));
  out.expect(std::abs(perfect - 1.0) < 1e-12, "MCC(perfect) = " + fmt(perfect, 12));
  out.expect(std::abs(uniform) < 1e-12, "MCC(uniform) = " + fmt(uniform, 12));
  out.detail << trials << " random matrices (" << sds_equal << " on the equality branch), max oracle deviation "
             << worst_oracle;
}

// -------------------------------------------------------------------- 4 --

void learner_oracles(Outcome& out) {
  int rf_same = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto ds = random_dataset(90, 6, 3, 1000 + s);
    const auto probe = random_dataset(150, 6, 3, 2000 + s);
    auto dt = fit_decision_tree(ds, config(LearnerKind::DT, {{"max_depth", nullptr}}, s));
    auto rf = fit_forest(ds, config(LearnerKind::RF,
                                    {{"n_trees", 1}, {"bootstrap", false}, {"max_features", "all"},
                                     {"max_depth", nullptr}},
                                    s + 77));
    rf_same += dt->predict(probe.features) == rf->predict(probe.features);
  }
  out.expect(rf_same == 20, "RF(1 tree) != DT on " + std::to_string(20 - rf_same) + " datasets");

  int gb_monotone = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ds = random_dataset(100, 4, 3, 3000 + s);
    auto gb = fit_gradient_boosting(ds, config(LearnerKind::GB, {{"n_rounds", 100}, {"learning_rate", 0.05}}, s));
    const auto& loss = gb->training_loss;
    bool ok = loss.size() == 101;
    for (std::size_t i = 1; ok && i < loss.size(); ++i) ok = loss[i] <= loss[i - 1];
    gb_monotone += ok;
  }
  out.expect(gb_monotone == 10, "GB log-loss increased on " + std::to_string(10 - gb_monotone) + " datasets");

  int knn_perfect = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ds = random_dataset(120, 5, 3, 4000 + s);
    auto knn = fit_knn(ds, config(LearnerKind::KNN, {{"k", 1}}));
    knn_perfect += evaluate(*knn, ds).suite.accuracy == 1.0;
  }
  out.expect(knn_perfect == 10, "kNN k=1 resubstitution below 100%");

  const auto ds = random_dataset(12, 5, 3, 21);
  MlpNetwork net;
  net.inputs = 5;
  net.hidden = 6;
  net.outputs = 3;
  Rng rng(5);
  net.params.resize(net.param_count());
  for (double& p : net.params) p = rng.uniform(-0.8, 0.8);
  const std::vector<double> w(12, 1.0);
  const auto rows = iota_indices(12);
  std::vector<double> grad(net.param_count());
  net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, grad);
  double worst_fd = 0.0;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const double h = 1e-6, orig = net.params[i];
    net.params[i] = orig + h;
    const double up = net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, {});
    net.params[i] = orig - h;
    const double down = net.loss_and_gradient(ds.features, ds.labels, w, rows, 1e-3, {});
    net.params[i] = orig;
    const double fd = (up - down) / (2 * h);
    worst_fd = std::max(worst_fd, std::abs(fd - grad[i]) / std::max(1e-8, std::abs(fd) + std::abs(grad[i])));
  }
  out.expect(worst_fd < 1e-4, "MLP gradient relative error " + std::to_string(worst_fd));

  const auto train = random_dataset(150, 6, 3, 61);
  const auto probe = random_dataset(100, 6, 3, 62);
  const std::vector<std::pair<LearnerKind, json>> stochastic = {
      {LearnerKind::RF, {{"n_trees", 30}}},
      {LearnerKind::ET, {{"n_trees", 30}}},
      {LearnerKind::GB, {{"n_rounds", 30}}},
      {LearnerKind::SVM, {{"epochs", 10}}},
      {LearnerKind::MLP, {{"epochs", 30}, {"hidden_units", 16}}}};
  int identical = 0;
  for (const auto& [kind, hp] : stochastic) {
    std::vector<std::vector<double>> outs;
    for (int threads : {1, 2, 8}) {
      set_thread_count(threads);
      outs.push_back(fit_learner(train, config(kind, hp, 99))->predict_proba(probe.features).data());
    }
    const bool same = outs[0] == outs[1] && outs[0] == outs[2];
    identical += same;
    out.expect(same, std::string(kind_name(kind)) + " differs across thread counts");
  }
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.seed = 5;
  spec.members = {member(LearnerKind::RF, "all", {{"n_trees", 10}}), member(LearnerKind::ET, "all", {{"n_trees", 10}})};
  std::vector<json> ens;
  for (int threads : {1, 2, 8}) {
    set_thread_count(threads);
    ens.push_back(fit_ensemble(train, spec)->to_json());
  }
  set_thread_count(0);
  out.expect(ens[0] == ens[1] && ens[0] == ens[2], "stacked ensemble differs across thread counts");

  out.detail << "RF=DT " << rf_same << "/20, GB monotone " << gb_monotone << "/10, kNN " << knn_perfect
             << "/10, MLP grad rel err " << worst_fd << ", thread-identical " << identical << "/"
             << stochastic.size() << " learners + stacking";
}

// -------------------------------------------------------------------- 5 --

void feature_invariances(Outcome& out) {
  Mask m(50, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 50; ++x) {
      const double dx = (x - 20.0) / 14.0, dy = (y - 18.0) / 7.0;
      if (dx * dx + dy * dy <= 1.0 || (x > 28 && x < 40 && y > 10 && y < 16)) m.at(x, y) = 255;
    }
  const auto h0 = hu_moments(m);
  double worst_hu = 0.0;
  auto r = m;
  for (int turn = 0; turn < 3; ++turn) {
    r = rotate90(r);
    const auto h = hu_moments(r);
    for (std::size_t i = 0; i < 7; ++i)
      worst_hu = std::max(worst_hu, std::abs(h[i] - h0[i]) / std::max(std::abs(h0[i]), 1e-300));
  }
  out.expect(worst_hu <= 1e-6, "Hu rotation error " + std::to_string(worst_hu));

  const Image flat(24, 24, 1, 5);
  const Mask full(24, 24, 1, 255);
  int constant_ok = 0;
  for (const auto& cfg : GlcmConfig::all()) {
    const auto h = haralick(glcm(flat, full, 8, cfg), 8);
    constant_ok += h.contrast == 0.0 && std::abs(h.energy - 1.0) <= 1e-12;
  }
  out.expect(constant_ok == 12, "constant-image GLCM failed on " + std::to_string(12 - constant_ok) + " configs");

  Rng rng(4);
  Image gray(48, 48);
  for (auto& v : gray.data) v = static_cast<std::uint8_t>(rng.below(256));
  const auto q = quantize_gray(gray, kDefaultGlcmLevels);
  const auto mask = disk_mask(48, 23.5, 23.5, 21);
  double worst_mass = 0.0;
  for (const auto& cfg : GlcmConfig::all()) {
    double mass = 0.0;
    for (double v : glcm(q, mask, kDefaultGlcmLevels, cfg)) mass += v;
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
  }
  out.expect(worst_mass <= 1e-12, "GLCM mass error " + std::to_string(worst_mass));

  const auto shape = extract_shape(extract_geometry(disk_mask(72, 35.5, 35.5, 28)));
  const double circ = shape[FeatureRegistry::instance().index_of("circularity")];
  out.expect(circ >= 0.95, "disk circularity " + fmt(circ));

  const auto& reg = FeatureRegistry::instance();
  const std::set<std::string> unique(reg.names().begin(), reg.names().end());
  out.expect(reg.count(FeatureGroup::Shape) == 41 && reg.count(FeatureGroup::Texture) == 62 &&
                 reg.count(FeatureGroup::Color) == 18 && reg.size() == 121 && unique.size() == 121,
             "registry counts");
  out.detail << "Hu rel err " << worst_hu << ", constant GLCM " << constant_ok << "/12, mass err " << worst_mass
             << ", disk circularity " << fmt(circ) << ", groups " << reg.count(FeatureGroup::Shape) << "/"
             << reg.count(FeatureGroup::Texture) << "/" << reg.count(FeatureGroup::Color) << " = " << reg.size();
}

// -------------------------------------------------------------------- 6 --

LabeledDataset registry_dataset(std::size_t n, std::uint64_t seed) {
  const auto& reg = FeatureRegistry::instance();
  Rng rng(seed);
  LabeledDataset ds;
  ds.feature_names = reg.names();
  ds.features = Matrix(n, reg.size());
  ds.standardized = true;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < reg.size(); ++f) ds.features(i, f) = rng.normal();
    const double s = ds.features(i, 0) + ds.features(i, kShapeCount);
    ds.labels.push_back(s < -0.5 ? 0 : (s < 0.5 ? 1 : 2));
    ds.ids.push_back("c" + std::to_string(i));
  }
  return ds;
}

void ensemble_protocol(Outcome& out) {
  const auto ds = random_dataset(120, 6, 3, 17);
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  spec.seed = 4;
  spec.members = {member(LearnerKind::DT, "all", {{"max_depth", 3}}), member(LearnerKind::KNN),
                  member(LearnerKind::RF, "all", {{"n_trees", 5}})};
  StackingDiagnostics diag;
  auto stacked = fit_stacking(ds, spec, &diag);
  out.expect(stacked->meta_width() == 9 && diag.meta_features.cols() == 9, "meta width != members x classes");

  std::size_t leaks = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rows = diag.train_rows[static_cast<std::size_t>(diag.fold_of[i])];
    leaks += std::binary_search(rows.begin(), rows.end(), i);
  }
  out.expect(leaks == 0, std::to_string(leaks) + " rows scored by a member trained on them");

  const auto reg_ds = registry_dataset(150, 8);
  EnsembleSpec specialist;
  specialist.combiner = Combiner::Stacking;
  specialist.stacking.n_folds = 3;
  specialist.members = {member(LearnerKind::RF, "shape", {{"n_trees", 10}}),
                        member(LearnerKind::ET, "texture", {{"n_trees", 10}})};
  auto spec_model = fit_stacking(reg_ds, specialist);
  Rng rng(77);
  std::vector<double> base(kFeatureCount), fuzzed(kFeatureCount), p0(3), p1(3);
  int insensitive = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    for (auto& v : base) v = rng.normal();
    fuzzed = base;
    for (std::size_t f = kShapeCount + kTextureCount; f < kFeatureCount; ++f) fuzzed[f] = 1e6 * rng.normal();
    spec_model->predict_proba(base, p0);
    spec_model->predict_proba(fuzzed, p1);
    insensitive += p0 == p1;
  }
  out.expect(insensitive == trials, "specialist output moved under color-slot fuzzing");

  const auto dt = member(LearnerKind::DT, "all", {{"max_depth", 4}});
  EnsembleSpec same;
  same.members = {dt, dt, dt};
  const auto single = fit_learner(ds, dt.learner)->predict(ds.features);
  int identical = 0;
  for (Combiner c : {Combiner::HardVote, Combiner::SoftVote}) {
    same.combiner = c;
    identical += fit_voting(ds, same)->predict(ds.features) == single;
  }
  out.expect(identical == 2, "voting of identical members differs from the member");
  out.detail << "meta width " << stacked->meta_width() << ", OOF leaks " << leaks << ", fuzz-insensitive "
             << insensitive << "/" << trials << ", identical-member votes " << identical << "/2";
}

// ------------------------------------------------------------ 7, 8 and 9 --

struct Desk {
  LabeledDataset cells;  // raw features of the synthetic smear
  std::optional<TrainedModel> model;
  double extract_seconds = 0.0;
};

void desk_run(Outcome& out, Desk& desk) {
  const auto t0 = Clock::now();
  SynthOptions opts;
  opts.n_cells = 600;
  opts.seed = 2024;
  desk.cells = extract_dataset(generate_cells(opts));
  desk.extract_seconds = seconds_since(t0);

  const ExperimentPlan plan;
  const auto spec = plan.ensemble_spec();
  const auto split = dataset_split(desk.cells, 0.2, plan.seed);
  desk.model.emplace(train_model(split.train, spec));
  const auto ev = desk.model->evaluate(split.test);
  const double elapsed = seconds_since(t0);

  out.expect(ev.suite.sds >= 0.95, "SDS " + format_percent(ev.suite.sds) + "%");
  out.expect(ev.suite.f1_weighted >= 0.90, "weighted F1 " + format_percent(ev.suite.f1_weighted) + "%");
  out.expect(elapsed < 300.0, "took " + fmt(elapsed, 1) + " s");
  std::string members;
  for (const auto& m : spec.members) members += (members.empty() ? "" : " + ") + m.label();
  out.detail << desk.cells.size() << " cells, " << combiner_name(spec.combiner) << " " << members << ", test "
             << split.test.size() << ": SDS " << format_percent(ev.suite.sds) << "%, F1 "
             << format_percent(ev.suite.f1_weighted) << "%, " << fmt(elapsed, 1) << " s";
}

void runtime_sanity(Outcome& out, const Desk& desk) {
  if (!desk.model) {
    out.expect(false, "no trained model from the desk-scale run");
    return;
  }
  // 1440 cached raw vectors: the smear features repeated.
  LabeledDataset batch;
  batch.feature_names = desk.cells.feature_names;
  batch.features = Matrix(0, desk.cells.dim());
  for (std::size_t i = 0; i < 1440; ++i) {
    const std::size_t src = i % desk.cells.size();
    batch.features.append_row(desk.cells.features.row(src));
    batch.labels.push_back(desk.cells.labels[src]);
    batch.ids.push_back("v" + std::to_string(i));
  }
  auto t0 = Clock::now();
  const auto predicted = desk.model->predict(batch);
  const double classify = seconds_since(t0);
  out.expect(predicted.size() == 1440, "prediction count");
  out.expect(classify < 1.0, "classifying 1440 vectors took " + fmt(classify, 3) + " s");

  SynthOptions one;
  one.n_cells = 3;
  one.seed = 9;
  one.canvas = kDefaultTargetSide;
  const auto cells = generate_cells(one);
  double worst = 0.0;
  for (const auto& cell : cells) {
    t0 = Clock::now();
    const auto fv = extract_all(cell);
    worst = std::max(worst, seconds_since(t0));
    out.expect(fv.values.size() == kFeatureCount, "feature vector width");
  }
  out.expect(worst < 2.0, "extracting one cell took " + fmt(worst, 3) + " s");
  out.detail << "1440 vectors in " << fmt(classify * 1e3, 1) << " ms; one " << kDefaultTargetSide
             << " px cell in " << fmt(worst * 1e3, 1) << " ms (worst of " << cells.size() << ")";
}

void sweep_cardinality(Outcome& out, const Desk& desk) {
  ExperimentPlan plan;
  plan.id = ExperimentId::Exp1Voting;
  plan.hyperparameters = rbc::test::cheap_hyperparameters();
  ExperimentData data;
  data.train = desk.cells;
  const auto t0 = Clock::now();
  const auto report = run_combination_sweep(plan, data);
  const double elapsed = seconds_since(t0);
  std::size_t failed = 0;
  std::set<std::string> labels;
  for (const auto& row : report.rows) {
    failed += !row.ok();
    labels.insert(row.label);
  }
  out.expect(report.rows.size() == 120, std::to_string(report.rows.size()) + " rows");
  out.expect(labels.size() == 120, "duplicate combinations");
  out.expect(failed == 0, std::to_string(failed) + " failed rows");
  out.expect(report.consistent(), "row metrics do not recompute from their matrices");
  out.detail << report.rows.size() << " rows over sizes 2..7 of a 7-learner pool (" << failed << " failed), "
             << fmt(elapsed, 1) << " s";
}

}  // namespace

int main() {
  set_log_level(0);
  Desk desk;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"SDS-score reference fixtures", sds_fixtures},
      {"weighted F1 within 1 pp", f1_fixtures},
      {"metric properties and label-stream oracle", metric_properties},
      {"learner oracles", learner_oracles},
      {"feature invariances and registry", feature_invariances},
      {"ensemble protocol", ensemble_protocol},
      {"desk-scale synthetic run", [&](Outcome& o) { desk_run(o, desk); }},
      {"runtime sanity", [&](Outcome& o) { runtime_sanity(o, desk); }},
      {"combination sweep cardinality", [&](Outcome& o) { sweep_cardinality(o, desk); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = out.failures.empty();
    failed += !pass;
    std::printf("%s  %zu  %-44s %s\n", pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                out.detail.str().c_str());
    for (const auto& f : out.failures) std::printf("          - %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
