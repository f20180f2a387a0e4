#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rbc/random.hpp"
#include "rbc/types.hpp"

namespace rbc {

using json = nlohmann::json;

enum class LearnerKind { DT, ET, RF, GB, SVM, KNN, MLP, LOGREG };

std::string_view kind_name(LearnerKind kind);
LearnerKind parse_kind(std::string_view name);  // case-insensitive
bool is_tree_kind(LearnerKind kind);

// The seven base learners in the order the combination sweeps enumerate them.
inline constexpr std::array<LearnerKind, 7> kBasePool = {LearnerKind::DT,  LearnerKind::ET, LearnerKind::GB,
                                                         LearnerKind::RF,  LearnerKind::SVM, LearnerKind::KNN,
                                                         LearnerKind::MLP};

struct LearnerConfig {
  LearnerKind kind = LearnerKind::DT;
  json hyperparameters = json::object();  // overrides on top of the defaults
  std::uint64_t seed = 0;

  static json defaults(LearnerKind kind);
  // Defaults merged with overrides; unknown keys and out-of-range values throw.
  json resolved() const;
  json to_json() const;
  static LearnerConfig from_json(const json& j);
};

// A fitted model over a fixed number of input columns.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind_name() const = 0;
  virtual void predict_proba(std::span<const double> x, std::span<double> out) const = 0;
  // Default: argmax of predict_proba, ties to the lowest class index.
  virtual int predict(std::span<const double> x) const;
  virtual json to_json() const = 0;
  // Normalized mean-decrease-impurity per input column; nullopt for non-tree models.
  virtual std::optional<std::vector<double>> impurity_importance() const { return std::nullopt; }

  std::size_t n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }

  Matrix predict_proba(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;

 protected:
  Classifier(std::size_t n_features, int n_classes) : n_features_(n_features), n_classes_(n_classes) {}
  void check_width(std::span<const double> x) const;

 private:
  std::size_t n_features_;
  int n_classes_;
};

int argmax(std::span<const double> v);

// Per-sample weights for the `class_weight` hyperparameter ("none" or "balanced").
std::vector<double> class_sample_weights(const LabeledDataset& ds, std::string_view mode);

// ---------------------------------------------------------------- trees --

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double weight = 0.0;             // weighted samples reaching the node
  double impurity_decrease = 0.0;  // weight*imp - wl*imp_l - wr*imp_r
  std::vector<double> value;       // class distribution, or {regression value}
};

class Tree {
 public:
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(std::span<const double> x) const;
  std::size_t depth() const;
  // Raw impurity decrease per feature divided by the root weight.
  std::vector<double> raw_importance(std::size_t n_features) const;
  json to_json() const;
  static Tree from_json(const json& j);
};

struct TreeParams {
  int max_depth = 12;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  std::size_t max_features = 0;  // 0 = all
  bool random_thresholds = false;  // extra-trees splitter
};

// CART on Gini impurity. `multiplicity` counts bootstrap repeats (0 = row
// unused); `weights` are class weights.
Tree grow_classification_tree(const Matrix& x, std::span<const int> y, int n_classes, std::span<const double> weights,
                              std::span<const int> multiplicity, const TreeParams& params, Rng& rng);

// Least-squares regression tree on `target`; leaf values are left as the
// weighted mean and may be overwritten by the caller.
Tree grow_regression_tree(const Matrix& x, std::span<const double> target, std::span<const double> weights,
                          const TreeParams& params, Rng& rng);

class DecisionTreeModel final : public Classifier {
 public:
  DecisionTreeModel(LearnerConfig cfg, Tree tree, std::size_t n_features, int n_classes);
  std::string kind_name() const override { return "DT"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  json to_json() const override;
  std::optional<std::vector<double>> impurity_importance() const override;
  const Tree& tree() const { return tree_; }
  const LearnerConfig& config() const { return cfg_; }

 private:
  LearnerConfig cfg_;
  Tree tree_;
};

class ForestModel final : public Classifier {
 public:
  ForestModel(LearnerConfig cfg, std::vector<Tree> trees, std::size_t n_features, int n_classes);
  std::string kind_name() const override { return std::string(rbc::kind_name(cfg_.kind)); }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  json to_json() const override;
  std::optional<std::vector<double>> impurity_importance() const override;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  LearnerConfig cfg_;
  std::vector<Tree> trees_;
};

class GradientBoostingModel final : public Classifier {
 public:
  GradientBoostingModel(LearnerConfig cfg, std::vector<double> init, double learning_rate,
                        std::vector<std::vector<Tree>> rounds, std::size_t n_features, int n_classes);
  std::string kind_name() const override { return "GB"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  void decision_scores(std::span<const double> x, std::span<double> out) const;
  json to_json() const override;
  std::optional<std::vector<double>> impurity_importance() const override;
  // Training multinomial log-loss after each round (index 0 = initial prior).
  std::vector<double> training_loss;

 private:
  LearnerConfig cfg_;
  std::vector<double> init_;
  double learning_rate_;
  std::vector<std::vector<Tree>> rounds_;  // rounds x classes
};

class KnnModel final : public Classifier {
 public:
  KnnModel(LearnerConfig cfg, int k, Matrix x, std::vector<int> y, std::vector<double> w, int n_classes);
  std::string kind_name() const override { return "KNN"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  json to_json() const override;
  // Indices of the k nearest training rows; ties broken by lower index.
  std::vector<std::size_t> neighbors(std::span<const double> x) const;

 private:
  LearnerConfig cfg_;
  int k_;
  Matrix x_;
  std::vector<int> y_;
  std::vector<double> w_;
};

enum class KernelKind { Linear, Rbf };

class SvmModel final : public Classifier {
 public:
  struct BinaryMachine {
    std::vector<std::size_t> support;   // rows into support_vectors_
    std::vector<double> coef;           // alpha_j * y_j / (lambda * T)
  };

  SvmModel(LearnerConfig cfg, KernelKind kernel, double gamma, Matrix support_vectors,
           std::vector<BinaryMachine> machines, std::size_t n_features, int n_classes);
  std::string kind_name() const override { return "SVM"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  // One-vs-rest margins, one per class.
  void decision_function(std::span<const double> x, std::span<double> out) const;
  json to_json() const override;

 private:
  double kernel(std::span<const double> a, std::span<const double> b) const;
  LearnerConfig cfg_;
  KernelKind kernel_;
  double gamma_;
  Matrix support_vectors_;
  std::vector<BinaryMachine> machines_;
};

// Single-hidden-layer ReLU network with softmax output. Parameters are laid
// out flat: W1 (hidden x in), b1, W2 (classes x hidden), b2.
struct MlpNetwork {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;
  std::vector<double> params;

  std::size_t param_count() const { return hidden * inputs + hidden + outputs * hidden + outputs; }
  void forward(std::span<const double> x, std::span<double> hidden_act, std::span<double> probs) const;
  // Weighted mean cross-entropy over `rows` plus (alpha/2)*||W||^2.
  // Fills `grad` (same layout as params) when non-empty.
  double loss_and_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w,
                           std::span<const std::size_t> rows, double alpha, std::span<double> grad) const;
};

class MlpModel final : public Classifier {
 public:
  MlpModel(LearnerConfig cfg, MlpNetwork net);
  std::string kind_name() const override { return "MLP"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  json to_json() const override;
  const MlpNetwork& network() const { return net_; }

 private:
  LearnerConfig cfg_;
  MlpNetwork net_;
};

class LogRegModel final : public Classifier {
 public:
  LogRegModel(LearnerConfig cfg, Matrix coef, std::vector<double> intercept, bool converged);
  std::string kind_name() const override { return "LOGREG"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  json to_json() const override;
  bool converged() const { return converged_; }
  const Matrix& coefficients() const { return coef_; }

 private:
  LearnerConfig cfg_;
  Matrix coef_;  // classes x features
  std::vector<double> intercept_;
  bool converged_;
};

std::unique_ptr<DecisionTreeModel> fit_decision_tree(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<ForestModel> fit_forest(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<GradientBoostingModel> fit_gradient_boosting(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<KnnModel> fit_knn(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<SvmModel> fit_svm(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<MlpModel> fit_mlp(const LabeledDataset& train, const LearnerConfig& cfg);
std::unique_ptr<LogRegModel> fit_logreg(const LabeledDataset& train, const LearnerConfig& cfg);

std::unique_ptr<Classifier> fit_learner(const LabeledDataset& train, const LearnerConfig& cfg);

// Restores any single learner from Classifier::to_json output.
std::unique_ptr<Classifier> learner_from_json(const json& j);

void softmax_inplace(std::span<double> v);

}  // namespace rbc
