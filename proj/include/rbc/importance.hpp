#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbc/ensemble.hpp"
#include "rbc/metrics.hpp"

namespace rbc {

enum class ImportanceMethod { MDI, Permutation };

std::string_view method_name(ImportanceMethod m);

struct ImportanceReport {
  ImportanceMethod method = ImportanceMethod::MDI;
  std::vector<std::string> names;   // column order of the scored data
  std::vector<std::string> groups;  // registry group per name, "other" outside the registry
  std::vector<double> scores;
  std::vector<std::size_t> ranking;  // indices into names, descending score
  std::string metric;                // permutation only
  int repeats = 0;                   // permutation only

  double score(std::string_view name) const;
  std::size_t rank_of(std::string_view name) const;  // 1-based
  // Top names of one group, in rank order.
  std::vector<std::string> top(std::string_view group, std::size_t k) const;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // name,group,score,rank
  // Table with one column per group, ranked rows.
  std::string to_markdown(std::size_t max_rows = 0) const;
};

// Builds names/groups/ranking around the given scores. Ties keep registry
// order (column order for names outside the registry).
ImportanceReport make_report(ImportanceMethod method, const std::vector<std::string>& names,
                             std::vector<double> scores);

// Mean decrease in impurity. Accepts DT/RF/ET/GB and ensembles whose members
// are all tree models (member scores are averaged over the full schema).
// Throws Unsupported otherwise.
ImportanceReport mdi_importance(const Classifier& model, const std::vector<std::string>& feature_names);

// Mean metric drop over `repeats` shuffles of each column.
ImportanceReport permutation_importance(const Classifier& model, const LabeledDataset& eval,
                                        std::string_view metric, int repeats, std::uint64_t seed);

struct SelectionRule {
  enum class Kind { CumulativeMass, TopK };
  Kind kind = Kind::CumulativeMass;
  double mass = 0.95;                     // CumulativeMass: per-group share to keep
  std::map<std::string, std::size_t> k;   // TopK: per-group counts
  std::vector<std::string> drop_groups;   // groups removed entirely

  static SelectionRule cumulative(double mass);
  static SelectionRule top_k(std::map<std::string, std::size_t> per_group);
  // "mass:0.95", "top:shape=20,texture=13" or "keep-all".
  static SelectionRule parse(std::string_view text);
  std::string describe() const;
};

// Names kept by `rule` from `report`, in schema order.
std::vector<std::string> apply_rule(const ImportanceReport& report, const SelectionRule& rule);

struct SelectionOptions {
  bool permutation_fallback = false;  // score non-tree members by permutation on the training set
  std::string fallback_metric = "accuracy";
  int fallback_repeats = 5;
};

struct SelectionResult {
  std::unique_ptr<EnsembleModel> full;
  std::unique_ptr<EnsembleModel> reduced;
  EnsembleSpec reduced_spec;
  ImportanceReport importance;
  std::vector<std::string> selected;
  std::optional<Evaluation> full_eval;
  std::optional<Evaluation> reduced_eval;
};

// Fits `spec`, ranks features from its fitted members, keeps the features
// chosen by `rule` and refits every member on its reduced slice. When `test`
// is given both models are evaluated on it.
SelectionResult select_and_retrain(const EnsembleSpec& spec, const LabeledDataset& train, const SelectionRule& rule,
                                   const LabeledDataset* test = nullptr, const SelectionOptions& options = {});

}  // namespace rbc
