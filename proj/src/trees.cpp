#include <algorithm>
#include <cmath>
#include <limits>

#include "learner_internal.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace {

struct GiniCriterion {
  std::span<const int> y;
  std::span<const double> w;
  int k;

  struct Acc {
    std::vector<double> c;
    double w = 0.0;
  };
  Acc make() const { return {std::vector<double>(static_cast<std::size_t>(k), 0.0), 0.0}; }
  void add(Acc& a, std::size_t r) const {
    a.c[static_cast<std::size_t>(y[r])] += w[r];
    a.w += w[r];
  }
  void sub(Acc& a, std::size_t r) const {
    a.c[static_cast<std::size_t>(y[r])] -= w[r];
    a.w -= w[r];
  }
  // sum_c w_c^2 / W; node impurity mass is W - proxy.
  double proxy(const Acc& a) const {
    if (a.w <= 0.0) return 0.0;
    double s = 0.0;
    for (double c : a.c) s += c * c;
    return s / a.w;
  }
  bool pure(const Acc& a) const {
    int nonzero = 0;
    for (double c : a.c) nonzero += c > 0.0;
    return nonzero <= 1;
  }
  std::vector<double> value(const Acc& a) const {
    std::vector<double> v(a.c.size(), 1.0 / static_cast<double>(a.c.size()));
    if (a.w > 0.0)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.c[i] / a.w;
    return v;
  }
};

struct MseCriterion {
  std::span<const double> t;
  std::span<const double> w;

  struct Acc {
    double s = 0.0;
    double w = 0.0;
    double sq = 0.0;
  };
  Acc make() const { return {}; }
  void add(Acc& a, std::size_t r) const {
    a.s += w[r] * t[r];
    a.w += w[r];
    a.sq += w[r] * t[r] * t[r];
  }
  void sub(Acc& a, std::size_t r) const {
    a.s -= w[r] * t[r];
    a.w -= w[r];
    a.sq -= w[r] * t[r] * t[r];
  }
  // S^2 / W; node squared-error mass is sq - proxy.
  double proxy(const Acc& a) const { return a.w > 0.0 ? a.s * a.s / a.w : 0.0; }
  bool pure(const Acc& a) const {
    if (a.w <= 0.0) return true;
    const double mean_sq = a.sq / a.w;
    const double mean = a.s / a.w;
    return mean_sq - mean * mean <= 1e-14 * std::max(1.0, mean_sq);
  }
  std::vector<double> value(const Acc& a) const { return {a.w > 0.0 ? a.s / a.w : 0.0}; }
};

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double proxy = 0.0;
};

template <class Crit>
class Grower {
 public:
  Grower(const Matrix& x, const Crit& crit, std::span<const int> multiplicity, const TreeParams& params, Rng& rng)
      : x_(x), crit_(crit), mult_(multiplicity), params_(params), rng_(rng) {}

  Tree run() {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < x_.rows(); ++r)
      if (mult_[r] > 0) rows.push_back(r);
    require(!rows.empty(), ErrorCode::EmptyData, "cannot grow a tree without samples");
    buf_.resize(rows.size());
    grow(rows.data(), rows.size(), 0);
    return std::move(tree_);
  }

 private:
  using Acc = typename Crit::Acc;

  int grow(std::size_t* rows, std::size_t n, int depth) {
    Acc acc = crit_.make();
    long long count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      crit_.add(acc, rows[i]);
      count += mult_[rows[i]];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().weight = acc.w;

    const bool stop = depth >= params_.max_depth || count < params_.min_samples_split ||
                      count < 2LL * params_.min_samples_leaf || crit_.pure(acc);
    Split best;
    if (!stop) best = find_split(rows, n, acc, count);
    if (!best.found) {
      tree_.nodes[static_cast<std::size_t>(id)].value = crit_.value(acc);
      return id;
    }
    std::size_t* mid = std::stable_partition(
        rows, rows + n, [&](std::size_t r) { return x_(r, best.feature) <= best.threshold; });
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.feature = static_cast<int>(best.feature);
      node.threshold = best.threshold;
      node.impurity_decrease = std::max(0.0, best.proxy - crit_.proxy(acc));
    }
    const int left = grow(rows, static_cast<std::size_t>(mid - rows), depth + 1);
    const int right = grow(mid, n - static_cast<std::size_t>(mid - rows), depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = left;
    tree_.nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void consider(Split& best, double proxy, std::size_t f, double thr) const {
    if (!best.found) {
      best = {true, f, thr, proxy};
      return;
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(best.proxy));
    const bool better = proxy > best.proxy + tol;
    const bool tie = !better && proxy >= best.proxy - tol;
    if (better || (tie && (f < best.feature || (f == best.feature && thr < best.threshold))))
      best = {true, f, thr, proxy};
  }

  // Returns false when the feature is constant on the node.
  bool evaluate_exhaustive(std::size_t* rows, std::size_t n, const Acc& total, long long count, std::size_t f,
                           Split& best) {
    for (std::size_t i = 0; i < n; ++i) buf_[i] = {x_(rows[i], f), rows[i]};
    std::sort(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
    if (buf_[0].first == buf_[n - 1].first) return false;
    Acc left = crit_.make();
    Acc right = total;
    long long n_left = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t r = buf_[i].second;
      crit_.add(left, r);
      crit_.sub(right, r);
      n_left += mult_[r];
      const double a = buf_[i].first, b = buf_[i + 1].first;
      if (a == b) continue;
      if (n_left < params_.min_samples_leaf) continue;
      if (count - n_left < params_.min_samples_leaf) break;
      double thr = a + (b - a) * 0.5;
      if (!(thr < b) || thr < a) thr = a;
      consider(best, crit_.proxy(left) + crit_.proxy(right), f, thr);
    }
    return true;
  }

  bool evaluate_random(std::size_t* rows, std::size_t n, long long count, std::size_t f, Split& best) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, x_(rows[i], f));
      hi = std::max(hi, x_(rows[i], f));
    }
    if (lo == hi) return false;
    const double thr = rng_.uniform(lo, hi);
    Acc left = crit_.make(), right = crit_.make();
    long long n_left = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rows[i];
      if (x_(r, f) <= thr) {
        crit_.add(left, r);
        n_left += mult_[r];
      } else {
        crit_.add(right, r);
      }
    }
    if (n_left >= params_.min_samples_leaf && count - n_left >= params_.min_samples_leaf)
      consider(best, crit_.proxy(left) + crit_.proxy(right), f, thr);
    return true;
  }

  bool evaluate(std::size_t* rows, std::size_t n, const Acc& total, long long count, std::size_t f, Split& best) {
    return params_.random_thresholds ? evaluate_random(rows, n, count, f, best)
                                     : evaluate_exhaustive(rows, n, total, count, f, best);
  }

  Split find_split(std::size_t* rows, std::size_t n, const Acc& total, long long count) {
    Split best;
    const std::size_t d = x_.cols();
    const std::size_t wanted = params_.max_features == 0 ? d : std::min(params_.max_features, d);
    if (wanted == d) {
      for (std::size_t f = 0; f < d; ++f) evaluate(rows, n, total, count, f, best);
      return best;
    }
    // Draw features without replacement until `wanted` non-constant ones
    // have been examined (constant features do not count).
    perm_ = iota_indices(d);
    std::size_t visited = 0;
    for (std::size_t i = 0; i < d && visited < wanted; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.below(d - i));
      std::swap(perm_[i], perm_[j]);
      if (evaluate(rows, n, total, count, perm_[i], best)) ++visited;
    }
    return best;
  }

  const Matrix& x_;
  const Crit& crit_;
  std::span<const int> mult_;
  const TreeParams& params_;
  Rng& rng_;
  Tree tree_;
  std::vector<std::pair<double, std::size_t>> buf_;
  std::vector<std::size_t> perm_;
};

std::size_t leaf_index(const Tree& tree, std::span<const double> x) {
  return static_cast<std::size_t>(&tree.leaf(x) - tree.nodes.data());
}

TreeParams tree_params_from(const json& hp, std::size_t d) {
  TreeParams p;
  p.max_depth = hp.at("max_depth").is_null() ? std::numeric_limits<int>::max() : hp.at("max_depth").get<int>();
  p.min_samples_split = hp.at("min_samples_split").get<int>();
  p.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
  const auto& mf = hp.at("max_features");
  std::size_t m = d;
  if (mf.is_string()) {
    const auto s = mf.get<std::string>();
    if (s == "sqrt") m = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
    if (s == "log2") m = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(d))));
  } else if (mf.is_number_integer()) {
    m = mf.get<std::size_t>();
    require(m <= d, ErrorCode::InvalidArgument,
            "max_features = " + std::to_string(m) + " exceeds the " + std::to_string(d) + " available features");
  } else {
    m = static_cast<std::size_t>(std::floor(mf.get<double>() * static_cast<double>(d)));
  }
  m = std::clamp<std::size_t>(m, 1, std::max<std::size_t>(d, 1));
  p.max_features = m == d ? 0 : m;
  return p;
}

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (s > 0.0)
    for (double& x : v) x /= s;
  return v;
}

}  // namespace

// ----------------------------------------------------------------- Tree --

const TreeNode& Tree::leaf(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0)
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                      : nodes[i].right);
  return nodes[i];
}

std::size_t Tree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature >= 0) {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }
  return best;
}

std::vector<double> Tree::raw_importance(std::size_t n_features) const {
  std::vector<double> imp(n_features, 0.0);
  if (nodes.empty() || nodes[0].weight <= 0.0) return imp;
  for (const auto& n : nodes)
    if (n.feature >= 0) imp[static_cast<std::size_t>(n.feature)] += n.impurity_decrease;
  for (double& v : imp) v /= nodes[0].weight;
  return imp;
}

json Tree::to_json() const {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, weight, decrease;
  json value = json::array();
  for (const auto& n : nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    weight.push_back(n.weight);
    decrease.push_back(n.impurity_decrease);
    value.push_back(n.feature < 0 ? json(n.value) : json::array());
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left},   {"right", right},
          {"weight", weight},   {"impurity_decrease", decrease},          {"value", value}};
}

Tree Tree::from_json(const json& j) {
  Tree t;
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto weight = j.at("weight").get<std::vector<double>>();
  const auto decrease = j.at("impurity_decrease").get<std::vector<double>>();
  const auto& value = j.at("value");
  const std::size_t n = feature.size();
  require(n > 0 && threshold.size() == n && left.size() == n && right.size() == n && weight.size() == n &&
              decrease.size() == n && value.size() == n,
          ErrorCode::Parse, "tree node arrays disagree in length");
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = t.nodes[i];
    node.feature = feature[i];
    node.threshold = threshold[i];
    node.left = left[i];
    node.right = right[i];
    node.weight = weight[i];
    node.impurity_decrease = decrease[i];
    node.value = value[i].get<std::vector<double>>();
    if (node.feature >= 0) {
      require(node.left > static_cast<int>(i) && node.right > static_cast<int>(i) && node.left < static_cast<int>(n) &&
                  node.right < static_cast<int>(n),
              ErrorCode::Parse, "tree node " + std::to_string(i) + " has invalid children");
    } else {
      require(!node.value.empty(), ErrorCode::Parse, "tree leaf " + std::to_string(i) + " has no value");
    }
  }
  return t;
}

Tree grow_classification_tree(const Matrix& x, std::span<const int> y, int n_classes, std::span<const double> weights,
                              std::span<const int> multiplicity, const TreeParams& params, Rng& rng) {
  std::vector<double> eff(weights.size());
  for (std::size_t i = 0; i < eff.size(); ++i) eff[i] = weights[i] * multiplicity[i];
  GiniCriterion crit{y, eff, n_classes};
  return Grower<GiniCriterion>(x, crit, multiplicity, params, rng).run();
}

Tree grow_regression_tree(const Matrix& x, std::span<const double> target, std::span<const double> weights,
                          const TreeParams& params, Rng& rng) {
  std::vector<int> ones(x.rows(), 1);
  MseCriterion crit{target, weights};
  return Grower<MseCriterion>(x, crit, ones, params, rng).run();
}

// ---------------------------------------------------------- single tree --

DecisionTreeModel::DecisionTreeModel(LearnerConfig cfg, Tree tree, std::size_t n_features, int n_classes)
    : Classifier(n_features, n_classes), cfg_(std::move(cfg)), tree_(std::move(tree)) {}

void DecisionTreeModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  const auto& v = tree_.leaf(x).value;
  std::copy(v.begin(), v.end(), out.begin());
}

json DecisionTreeModel::to_json() const {
  return model_envelope("DT", cfg_, n_features(), n_classes(), {{"tree", tree_.to_json()}});
}

std::optional<std::vector<double>> DecisionTreeModel::impurity_importance() const {
  return normalized(tree_.raw_importance(n_features()));
}

std::unique_ptr<DecisionTreeModel> fit_decision_tree(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::DT);
  const json hp = cfg.resolved();
  const auto params = tree_params_from(hp, train.dim());
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  std::vector<int> mult(train.size(), 1);
  Rng rng(derive_seed(cfg.seed, 0));
  auto tree = grow_classification_tree(train.features, train.labels, train.n_classes, w, mult, params, rng);
  return std::make_unique<DecisionTreeModel>(cfg, std::move(tree), train.dim(), train.n_classes);
}

// --------------------------------------------------------------- forests --

ForestModel::ForestModel(LearnerConfig cfg, std::vector<Tree> trees, std::size_t n_features, int n_classes)
    : Classifier(n_features, n_classes), cfg_(std::move(cfg)), trees_(std::move(trees)) {}

void ForestModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : trees_) {
    const auto& v = t.leaf(x).value;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += v[c];
  }
  for (double& p : out) p /= static_cast<double>(trees_.size());
}

json ForestModel::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return model_envelope(rbc::kind_name(cfg_.kind), cfg_, n_features(), n_classes(), {{"trees", trees}});
}

std::optional<std::vector<double>> ForestModel::impurity_importance() const {
  std::vector<double> total(n_features(), 0.0);
  for (const auto& t : trees_) {
    const auto imp = normalized(t.raw_importance(n_features()));
    for (std::size_t f = 0; f < total.size(); ++f) total[f] += imp[f];
  }
  return normalized(total);
}

std::unique_ptr<ForestModel> fit_forest(const LabeledDataset& train, const LearnerConfig& cfg) {
  require(cfg.kind == LearnerKind::RF || cfg.kind == LearnerKind::ET, ErrorCode::InvalidArgument,
          "fit_forest needs an RF or ET config");
  check_trainable(train, cfg.kind);
  const json hp = cfg.resolved();
  auto params = tree_params_from(hp, train.dim());
  params.random_thresholds = cfg.kind == LearnerKind::ET;
  const bool bootstrap = hp["bootstrap"].get<bool>();
  const auto n_trees = hp["n_trees"].get<std::size_t>();
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  const std::size_t n = train.size();

  std::vector<Tree> trees(n_trees);
  parallel_for(n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    std::vector<int> mult(n, bootstrap ? 0 : 1);
    if (bootstrap)
      for (std::size_t i = 0; i < n; ++i) ++mult[static_cast<std::size_t>(rng.below(n))];
    trees[t] = grow_classification_tree(train.features, train.labels, train.n_classes, w, mult, params, rng);
  });
  return std::make_unique<ForestModel>(cfg, std::move(trees), train.dim(), train.n_classes);
}

// ------------------------------------------------------ gradient boosting --

GradientBoostingModel::GradientBoostingModel(LearnerConfig cfg, std::vector<double> init, double learning_rate,
                                             std::vector<std::vector<Tree>> rounds, std::size_t n_features,
                                             int n_classes)
    : Classifier(n_features, n_classes), cfg_(std::move(cfg)), init_(std::move(init)), learning_rate_(learning_rate),
      rounds_(std::move(rounds)) {}

void GradientBoostingModel::decision_scores(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  std::copy(init_.begin(), init_.end(), out.begin());
  for (const auto& round : rounds_)
    for (std::size_t k = 0; k < round.size(); ++k) out[k] += learning_rate_ * round[k].leaf(x).value[0];
}

void GradientBoostingModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  decision_scores(x, out);
  softmax_inplace(out);
}

json GradientBoostingModel::to_json() const {
  json rounds = json::array();
  for (const auto& round : rounds_) {
    json r = json::array();
    for (const auto& t : round) r.push_back(t.to_json());
    rounds.push_back(std::move(r));
  }
  return model_envelope("GB", cfg_, n_features(), n_classes(),
                        {{"init", init_}, {"learning_rate", learning_rate_}, {"rounds", rounds}});
}

std::optional<std::vector<double>> GradientBoostingModel::impurity_importance() const {
  std::vector<double> total(n_features(), 0.0);
  for (const auto& round : rounds_)
    for (const auto& t : round) {
      const auto imp = t.raw_importance(n_features());
      for (std::size_t f = 0; f < total.size(); ++f) total[f] += imp[f];
    }
  return normalized(total);
}

std::unique_ptr<GradientBoostingModel> fit_gradient_boosting(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::GB);
  const json hp = cfg.resolved();
  const auto params = tree_params_from(hp, train.dim());
  const double lr = hp["learning_rate"].get<double>();
  const auto n_rounds = hp["n_rounds"].get<std::size_t>();
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  const std::size_t n = train.size();
  const auto k = static_cast<std::size_t>(train.n_classes);

  double w_total = 0.0;
  std::vector<double> init(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    init[static_cast<std::size_t>(train.labels[i])] += w[i];
    w_total += w[i];
  }
  for (double& v : init) v = std::log(std::max(v / w_total, 1e-12));

  Matrix scores(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) scores(i, c) = init[c];

  auto log_loss = [&]() {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = scores.row(i);
      const double m = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double s : row) z += std::exp(s - m);
      loss += w[i] * (m + std::log(z) - row[static_cast<std::size_t>(train.labels[i])]);
    }
    return loss / w_total;
  };

  std::vector<std::vector<Tree>> rounds;
  rounds.reserve(n_rounds);
  std::vector<double> losses{log_loss()};
  Matrix prob(n, k);
  const double newton_scale = k > 1 ? static_cast<double>(k - 1) / static_cast<double>(k) : 0.0;

  for (std::size_t m = 0; m < n_rounds; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      auto p = prob.row(i);
      const auto s = scores.row(i);
      std::copy(s.begin(), s.end(), p.begin());
      softmax_inplace(p);
    }
    std::vector<Tree> round(k);
    Matrix step(n, k);
    parallel_for(k, [&](std::size_t c) {
      std::vector<double> residual(n);
      for (std::size_t i = 0; i < n; ++i)
        residual[i] = (static_cast<std::size_t>(train.labels[i]) == c ? 1.0 : 0.0) - prob(i, c);
      Rng rng(derive_seed(cfg.seed, m * k + c));
      Tree tree = grow_regression_tree(train.features, residual, w, params, rng);
      // Newton step per leaf for the multinomial deviance.
      std::vector<double> num(tree.nodes.size(), 0.0), den(tree.nodes.size(), 0.0);
      std::vector<std::size_t> where(n);
      for (std::size_t i = 0; i < n; ++i) {
        where[i] = leaf_index(tree, train.features.row(i));
        const double r = residual[i];
        num[where[i]] += w[i] * r;
        den[where[i]] += w[i] * std::abs(r) * (1.0 - std::abs(r));
      }
      for (std::size_t j = 0; j < tree.nodes.size(); ++j)
        if (tree.nodes[j].feature < 0)
          tree.nodes[j].value = {den[j] > 1e-150 ? newton_scale * num[j] / den[j] : 0.0};
      for (std::size_t i = 0; i < n; ++i) step(i, c) = tree.nodes[where[i]].value[0];
      round[c] = std::move(tree);
    });
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) scores(i, c) += lr * step(i, c);
    const double loss = log_loss();
    require(std::isfinite(loss), ErrorCode::Divergence,
            "gradient boosting diverged at round " + std::to_string(m + 1) + " (non-finite loss)");
    losses.push_back(loss);
    rounds.push_back(std::move(round));
  }
  auto model = std::make_unique<GradientBoostingModel>(cfg, std::move(init), lr, std::move(rounds), train.dim(),
                                                       train.n_classes);
  model->training_loss = std::move(losses);
  return model;
}

}  // namespace rbc
