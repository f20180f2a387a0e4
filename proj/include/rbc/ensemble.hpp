#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbc/learners.hpp"

namespace rbc {

enum class Combiner { HardVote, SoftVote, Stacking };

std::string_view combiner_name(Combiner c);
Combiner parse_combiner(std::string_view name);

// A member sees either every column ("all"), one registry group ("shape",
// "texture", "color"), or an explicit list of column names.
struct MemberSpec {
  LearnerConfig learner;
  std::string selector = "all";
  std::vector<std::string> columns;  // overrides `selector` when non-empty

  std::string label() const;  // e.g. "RF", "RF_shape", or "RF_shape_20" with explicit columns
};

struct StackingSpec {
  int n_folds = 5;
  LearnerConfig meta{LearnerKind::LOGREG, json::object(), 0};
  bool probabilities = true;  // false: one predicted-label column per member
};

struct EnsembleSpec {
  std::vector<MemberSpec> members;
  Combiner combiner = Combiner::SoftVote;
  std::vector<double> weights;  // empty = equal weights
  StackingSpec stacking;
  std::uint64_t seed = 0;
  bool replication_mode = false;  // enforces 2..7 members

  void validate() const;
  json to_json() const;
  static EnsembleSpec from_json(const json& j);
};

// Column indices of `feature_names` that a member with this spec sees, in
// schema order. Throws Schema for unknown names and EmptySelection when
// nothing is selected.
std::vector<std::size_t> select_columns(const MemberSpec& member, const std::vector<std::string>& feature_names);

// Seed of member `index`. It depends on the ensemble seed, the member's kind,
// selector, hyperparameters and on how many identical members precede it, so
// reordering distinct members never changes any member's randomness.
std::uint64_t member_seed(const EnsembleSpec& spec, std::size_t index);

struct FittedMember {
  std::unique_ptr<Classifier> model;
  std::vector<std::size_t> columns;
  std::string label;
};

class EnsembleModel final : public Classifier {
 public:
  EnsembleModel(Combiner combiner, std::vector<FittedMember> members, std::vector<double> weights,
                std::unique_ptr<Classifier> meta, bool meta_probabilities, std::size_t n_features, int n_classes);

  std::string kind_name() const override { return "ENSEMBLE"; }
  using Classifier::predict;
  using Classifier::predict_proba;
  // Soft vote: weighted mean member probabilities. Hard vote: weighted vote
  // shares. Stacking: meta-learner probabilities.
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  // Hard vote resolves ties by summed member probability, then class order.
  int predict(std::span<const double> x) const override;
  json to_json() const override;

  Combiner combiner() const { return combiner_; }
  const std::vector<FittedMember>& members() const { return members_; }
  const std::vector<double>& weights() const { return weights_; }
  const Classifier* meta() const { return meta_.get(); }
  // Stacked meta-feature row for one input vector.
  std::vector<double> meta_features(std::span<const double> x) const;
  std::size_t meta_width() const;

 private:
  void member_outputs(std::span<const double> x, std::vector<std::vector<double>>& probs) const;

  Combiner combiner_;
  std::vector<FittedMember> members_;
  std::vector<double> weights_;
  std::unique_ptr<Classifier> meta_;
  bool meta_probabilities_;
};

// Bookkeeping of a stacking fit, used to audit the out-of-fold protocol.
struct StackingDiagnostics {
  std::vector<int> fold_of;  // per training row
  // train_rows[f] = training-set rows used to fit the fold-f members.
  std::vector<std::vector<std::size_t>> train_rows;
  Matrix meta_features;  // n_samples x width, out-of-fold
};

std::unique_ptr<EnsembleModel> fit_voting(const LabeledDataset& train, const EnsembleSpec& spec);
std::unique_ptr<EnsembleModel> fit_stacking(const LabeledDataset& train, const EnsembleSpec& spec,
                                            StackingDiagnostics* diagnostics = nullptr);
std::unique_ptr<EnsembleModel> fit_ensemble(const LabeledDataset& train, const EnsembleSpec& spec,
                                            StackingDiagnostics* diagnostics = nullptr);

// Building blocks shared with the experiment sweeps.

std::vector<int> stacking_folds(const LabeledDataset& train, const EnsembleSpec& spec);

// Out-of-fold member outputs (n x classes, or n x 1 predicted labels).
Matrix out_of_fold_outputs(const LabeledDataset& train, const LearnerConfig& learner,
                           const std::vector<std::size_t>& columns, const std::vector<int>& fold_of, int n_folds,
                           bool probabilities);

// Meta-learner training set from horizontally concatenated member blocks.
LabeledDataset meta_dataset(const std::vector<const Matrix*>& blocks, const std::vector<int>& labels, int n_classes,
                            const std::vector<std::string>& member_labels, bool probabilities);

// Weighted hard or soft vote from member probability rows.
std::vector<double> vote(Combiner combiner, const std::vector<std::vector<double>>& member_probs,
                         const std::vector<double>& weights);
int vote_label(Combiner combiner, const std::vector<std::vector<double>>& member_probs,
               const std::vector<double>& weights);

// Restores a single learner or an ensemble.
std::unique_ptr<Classifier> classifier_from_json(const json& j);

}  // namespace rbc
