#include "rbc/learners.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "learner_internal.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace {

constexpr std::array<std::string_view, 8> kKindNames = {"DT", "ET", "RF", "GB", "SVM", "KNN", "MLP", "LOGREG"};

json common_defaults(json j) {
  j["class_weight"] = "none";
  return j;
}

void check_number(const json& hp, const char* key, double lo, double hi, bool lo_open = false) {
  const auto& v = hp.at(key);
  require(v.is_number(), ErrorCode::InvalidArgument, std::string("hyperparameter '") + key + "' must be a number");
  const double x = v.get<double>();
  const bool ok = (lo_open ? x > lo : x >= lo) && x <= hi && std::isfinite(x);
  require(ok, ErrorCode::InvalidArgument,
          std::string("hyperparameter '") + key + "' = " + v.dump() + " is outside its valid range");
}

void check_integer(const json& hp, const char* key, long long lo, long long hi) {
  const auto& v = hp.at(key);
  require(v.is_number_integer(), ErrorCode::InvalidArgument,
          std::string("hyperparameter '") + key + "' must be an integer");
  const auto x = v.get<long long>();
  require(x >= lo && x <= hi, ErrorCode::InvalidArgument,
          std::string("hyperparameter '") + key + "' = " + v.dump() + " is outside its valid range");
}

void check_depth(const json& hp) {
  if (hp.at("max_depth").is_null()) return;
  check_integer(hp, "max_depth", 0, 10000);
}

void check_max_features(const json& hp) {
  const auto& v = hp.at("max_features");
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    require(s == "sqrt" || s == "log2" || s == "all", ErrorCode::InvalidArgument,
            "max_features must be 'sqrt', 'log2', 'all', an integer >= 1 or a fraction in (0,1]");
  } else if (v.is_number_integer()) {
    require(v.get<long long>() >= 1, ErrorCode::InvalidArgument, "max_features must be >= 1");
  } else if (v.is_number_float()) {
    const double f = v.get<double>();
    require(f > 0.0 && f <= 1.0, ErrorCode::InvalidArgument, "fractional max_features must lie in (0,1]");
  } else {
    fail(ErrorCode::InvalidArgument, "max_features has an unsupported type");
  }
}

void check_tree_common(const json& hp) {
  check_depth(hp);
  check_integer(hp, "min_samples_split", 2, 1 << 30);
  check_integer(hp, "min_samples_leaf", 1, 1 << 30);
  check_max_features(hp);
}

}  // namespace

std::string_view kind_name(LearnerKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

LearnerKind parse_kind(std::string_view name) {
  std::string up(name);
  for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == up) return static_cast<LearnerKind>(i);
  fail(ErrorCode::Parse, "unknown learner kind '" + std::string(name) + "'");
}

bool is_tree_kind(LearnerKind kind) {
  return kind == LearnerKind::DT || kind == LearnerKind::ET || kind == LearnerKind::RF || kind == LearnerKind::GB;
}

json LearnerConfig::defaults(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::DT:
      return common_defaults(
          {{"max_depth", 12}, {"min_samples_split", 2}, {"min_samples_leaf", 1}, {"max_features", "all"}});
    case LearnerKind::RF:
      return common_defaults({{"n_trees", 100},
                              {"max_depth", nullptr},
                              {"min_samples_split", 2},
                              {"min_samples_leaf", 1},
                              {"max_features", "sqrt"},
                              {"bootstrap", true}});
    case LearnerKind::ET:
      return common_defaults({{"n_trees", 100},
                              {"max_depth", nullptr},
                              {"min_samples_split", 2},
                              {"min_samples_leaf", 1},
                              {"max_features", "sqrt"},
                              {"bootstrap", false}});
    case LearnerKind::GB:
      return common_defaults({{"n_rounds", 100},
                              {"learning_rate", 0.1},
                              {"max_depth", 3},
                              {"min_samples_split", 2},
                              {"min_samples_leaf", 1},
                              {"max_features", "all"}});
    case LearnerKind::KNN:
      return common_defaults({{"k", 5}, {"force", false}});
    case LearnerKind::SVM:
      return common_defaults({{"kernel", "rbf"}, {"C", 1.0}, {"gamma", "auto"}, {"epochs", 20}, {"force", false}});
    case LearnerKind::MLP:
      return common_defaults({{"hidden_units", 64},
                              {"epochs", 200},
                              {"learning_rate", 0.01},
                              {"batch_size", 32},
                              {"momentum", 0.9},
                              {"alpha", 1e-4},
                              {"force", false}});
    case LearnerKind::LOGREG:
      return common_defaults({{"l2", 1e-3}, {"max_epochs", 2000}, {"tol", 1e-6}, {"learning_rate", 1.0}});
  }
  fail(ErrorCode::InvalidArgument, "unknown learner kind");
}

json LearnerConfig::resolved() const {
  json hp = defaults(kind);
  if (!hyperparameters.is_null()) {
    require(hyperparameters.is_object(), ErrorCode::InvalidArgument, "hyperparameters must be a JSON object");
    for (const auto& [key, value] : hyperparameters.items()) {
      require(hp.contains(key), ErrorCode::InvalidArgument,
              "unknown hyperparameter '" + key + "' for " + std::string(rbc::kind_name(kind)));
      hp[key] = value;
    }
  }
  const auto cw = hp.at("class_weight");
  require(cw.is_string() && (cw == "none" || cw == "balanced"), ErrorCode::InvalidArgument,
          "class_weight must be 'none' or 'balanced'");
  if (hp.contains("force")) require(hp["force"].is_boolean(), ErrorCode::InvalidArgument, "force must be a boolean");
  switch (kind) {
    case LearnerKind::DT:
      check_tree_common(hp);
      break;
    case LearnerKind::RF:
    case LearnerKind::ET:
      check_tree_common(hp);
      check_integer(hp, "n_trees", 1, 100000);
      require(hp["bootstrap"].is_boolean(), ErrorCode::InvalidArgument, "bootstrap must be a boolean");
      break;
    case LearnerKind::GB:
      check_tree_common(hp);
      check_integer(hp, "n_rounds", 1, 100000);
      check_number(hp, "learning_rate", 0.0, 1.0, true);
      break;
    case LearnerKind::KNN:
      check_integer(hp, "k", 1, 1 << 30);
      break;
    case LearnerKind::SVM: {
      const auto& k = hp["kernel"];
      require(k == "rbf" || k == "linear", ErrorCode::InvalidArgument, "kernel must be 'rbf' or 'linear'");
      check_number(hp, "C", 0.0, 1e12, true);
      if (!(hp["gamma"].is_string() && hp["gamma"] == "auto")) check_number(hp, "gamma", 0.0, 1e12, true);
      check_integer(hp, "epochs", 1, 100000);
      break;
    }
    case LearnerKind::MLP:
      check_integer(hp, "hidden_units", 1, 100000);
      check_integer(hp, "epochs", 1, 1000000);
      check_number(hp, "learning_rate", 0.0, 10.0, true);
      check_integer(hp, "batch_size", 1, 1 << 30);
      check_number(hp, "momentum", 0.0, 0.999999);
      check_number(hp, "alpha", 0.0, 1e6);
      break;
    case LearnerKind::LOGREG:
      check_number(hp, "l2", 0.0, 1e6);
      check_integer(hp, "max_epochs", 1, 10000000);
      check_number(hp, "tol", 0.0, 1.0, true);
      check_number(hp, "learning_rate", 0.0, 1e6, true);
      break;
  }
  return hp;
}

json LearnerConfig::to_json() const {
  return {{"kind", std::string(rbc::kind_name(kind))}, {"hyperparameters", resolved()}, {"seed", seed}};
}

LearnerConfig LearnerConfig::from_json(const json& j) {
  require(j.is_object() && j.contains("kind"), ErrorCode::Parse, "learner config needs a 'kind'");
  LearnerConfig cfg;
  cfg.kind = parse_kind(j.at("kind").get<std::string>());
  if (j.contains("hyperparameters")) cfg.hyperparameters = j.at("hyperparameters");
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  // Other keys are shorthand for hyperparameters: {"kind": "RF", "n_trees": 50}.
  for (const auto& [key, value] : j.items()) {
    if (key == "kind" || key == "seed" || key == "hyperparameters") continue;
    if (cfg.hyperparameters.is_null()) cfg.hyperparameters = json::object();
    require(cfg.hyperparameters.is_object(), ErrorCode::InvalidArgument, "hyperparameters must be a JSON object");
    require(!cfg.hyperparameters.contains(key), ErrorCode::Parse, "hyperparameter '" + key + "' given twice");
    cfg.hyperparameters[key] = value;
  }
  cfg.resolved();  // validate eagerly
  return cfg;
}

// ------------------------------------------------------------ classifier --

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void Classifier::check_width(std::span<const double> x) const {
  require(x.size() == n_features_, ErrorCode::Schema,
          kind_name() + " model expects " + std::to_string(n_features_) + " features, got " +
              std::to_string(x.size()));
}

int Classifier::predict(std::span<const double> x) const {
  std::vector<double> p(static_cast<std::size_t>(n_classes_));
  predict_proba(x, p);
  return argmax(p);
}

Matrix Classifier::predict_proba(const Matrix& x) const {
  require(x.cols() == n_features_, ErrorCode::Schema,
          kind_name() + " model expects " + std::to_string(n_features_) + " features, got " +
              std::to_string(x.cols()));
  Matrix out(x.rows(), static_cast<std::size_t>(n_classes_));
  constexpr std::size_t kChunk = 64;
  parallel_for((x.rows() + kChunk - 1) / kChunk, [&](std::size_t c) {
    const std::size_t end = std::min(x.rows(), (c + 1) * kChunk);
    for (std::size_t r = c * kChunk; r < end; ++r) predict_proba(x.row(r), out.row(r));
  });
  return out;
}

std::vector<int> Classifier::predict(const Matrix& x) const {
  require(x.cols() == n_features_, ErrorCode::Schema,
          kind_name() + " model expects " + std::to_string(n_features_) + " features, got " +
              std::to_string(x.cols()));
  std::vector<int> out(x.rows());
  constexpr std::size_t kChunk = 64;
  parallel_for((x.rows() + kChunk - 1) / kChunk, [&](std::size_t c) {
    const std::size_t end = std::min(x.rows(), (c + 1) * kChunk);
    for (std::size_t r = c * kChunk; r < end; ++r) out[r] = predict(x.row(r));
  });
  return out;
}

std::vector<double> class_sample_weights(const LabeledDataset& ds, std::string_view mode) {
  std::vector<double> w(ds.size(), 1.0);
  if (mode == "none") return w;
  require(mode == "balanced", ErrorCode::InvalidArgument, "class_weight must be 'none' or 'balanced'");
  const auto counts = ds.class_counts();
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = counts[static_cast<std::size_t>(ds.labels[i])];
    w[i] = static_cast<double>(ds.size()) / (static_cast<double>(present) * static_cast<double>(c));
  }
  return w;
}

void check_trainable(const LabeledDataset& train, LearnerKind kind) {
  require(train.size() > 0, ErrorCode::EmptyData,
          "cannot fit " + std::string(kind_name(kind)) + " on an empty training set");
  require(train.fully_labeled(), ErrorCode::InvalidArgument, "training set has unlabeled rows");
  require(train.features.rows() == train.size() && train.features.cols() == train.dim(), ErrorCode::Schema,
          "training matrix shape does not match its schema");
}

void check_standardized(const LabeledDataset& train, const json& hp, LearnerKind kind) {
  require(train.standardized || hp.at("force").get<bool>(), ErrorCode::InvalidArgument,
          std::string(kind_name(kind)) +
              " needs standardized features; standardize first or set hyperparameter force=true");
}

// ------------------------------------------------------------------ kNN --

KnnModel::KnnModel(LearnerConfig cfg, int k, Matrix x, std::vector<int> y, std::vector<double> w, int n_classes)
    : Classifier(x.cols(), n_classes), cfg_(std::move(cfg)), k_(k), x_(std::move(x)), y_(std::move(y)),
      w_(std::move(w)) {}

std::vector<std::size_t> KnnModel::neighbors(std::span<const double> x) const {
  check_width(x);
  std::vector<std::pair<double, std::size_t>> d(x_.rows());
  for (std::size_t r = 0; r < x_.rows(); ++r) {
    const auto row = x_.row(r);
    double s = 0.0;
    for (std::size_t f = 0; f < row.size(); ++f) {
      const double diff = row[f] - x[f];
      s += diff * diff;
    }
    d[r] = {s, r};
  }
  const auto k = static_cast<std::size_t>(k_);
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

void KnnModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  for (auto r : neighbors(x)) {
    out[static_cast<std::size_t>(y_[r])] += w_[r];
    total += w_[r];
  }
  for (double& p : out) p /= total;
}

json KnnModel::to_json() const {
  return model_envelope("KNN", cfg_, n_features(), n_classes(),
                        {{"k", k_}, {"rows", x_.rows()}, {"x", x_.data()}, {"y", y_}, {"w", w_}});
}

std::unique_ptr<KnnModel> fit_knn(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::KNN);
  const json hp = cfg.resolved();
  check_standardized(train, hp, LearnerKind::KNN);
  const int k = hp["k"].get<int>();
  require(static_cast<std::size_t>(k) <= train.size(), ErrorCode::InvalidArgument,
          "k = " + std::to_string(k) + " exceeds the " + std::to_string(train.size()) + " training samples");
  return std::make_unique<KnnModel>(cfg, k, train.features, train.labels,
                                    class_sample_weights(train, hp["class_weight"].get<std::string>()),
                                    train.n_classes);
}

// ------------------------------------------------------------- dispatch --

std::unique_ptr<Classifier> fit_learner(const LabeledDataset& train, const LearnerConfig& cfg) {
  switch (cfg.kind) {
    case LearnerKind::DT:
      return fit_decision_tree(train, cfg);
    case LearnerKind::RF:
    case LearnerKind::ET:
      return fit_forest(train, cfg);
    case LearnerKind::GB:
      return fit_gradient_boosting(train, cfg);
    case LearnerKind::KNN:
      return fit_knn(train, cfg);
    case LearnerKind::SVM:
      return fit_svm(train, cfg);
    case LearnerKind::MLP:
      return fit_mlp(train, cfg);
    case LearnerKind::LOGREG:
      return fit_logreg(train, cfg);
  }
  fail(ErrorCode::InvalidArgument, "unknown learner kind");
}

}  // namespace rbc
