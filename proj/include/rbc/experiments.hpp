#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbc/ensemble.hpp"
#include "rbc/features.hpp"
#include "rbc/importance.hpp"
#include "rbc/metrics.hpp"

namespace rbc {

inline constexpr int kReportFormatVersion = 1;

enum class ExperimentId { Exp1Voting, Exp1Stacking, Exp2Groups, Exp3Specialists, Exp4Importance, Exp5Validation };

std::string_view experiment_name(ExperimentId id);  // "exp1_voting", ...
// Accepts the snake_case names and the CamelCase enum spellings.
ExperimentId parse_experiment(std::string_view name);

// Held-out evaluation protocol. Split: one stratified train/test split.
// CV: stratified k-fold; confusion matrices are summed over the folds.
struct Protocol {
  enum class Mode { Split, CrossValidation };
  Mode mode = Mode::Split;
  double test_fraction = 0.2;
  int n_folds = 5;

  void validate() const;
  json to_json() const;
  static Protocol from_json(const json& j);
  std::string describe() const;  // "split 80/20" or "5-fold cv"
};

struct ExperimentPlan {
  ExperimentId id = ExperimentId::Exp1Stacking;
  std::filesystem::path train;       // feature CSV, manifest CSV or class-folder directory
  std::filesystem::path validation;  // Exp5 only
  std::vector<std::filesystem::path> models;  // Exp5: persisted models to validate instead of training
  std::vector<LearnerKind> pool{kBasePool.begin(), kBasePool.end()};
  std::vector<int> sizes = {2, 3, 4, 5, 6, 7};  // Exp1 combination sizes
  std::vector<int> specialist_sizes = {3, 2};   // Exp3: 3 = shape+texture+color, 2 = shape+texture
  std::uint64_t seed = 0;
  std::map<std::string, json> hyperparameters;  // per learner kind, e.g. "RF" -> {"n_trees": 200}
  Protocol protocol;
  Combiner voting = Combiner::SoftVote;
  StackingSpec stacking;
  std::optional<EnsembleSpec> ensemble;  // Exp4, Exp5 and timing; default stacked RF_shape + ET_texture
  std::string selection = "mass:0.95;drop=color";
  bool permutation_fallback = false;
  int timing_repeats = 1;
  ExtractionOptions extraction;
  std::filesystem::path output_dir;

  void validate() const;
  // Relative paths in `j` resolve against `base_dir`.
  static ExperimentPlan from_json(const json& j, const std::filesystem::path& base_dir = {});
  json to_json() const;

  // Pool learner with the plan's hyperparameters and no seed of its own.
  LearnerConfig learner(LearnerKind kind) const;
  // The reference ensemble with plan seed, stacking block and hyperparameters
  // filled in for members that carry none.
  EnsembleSpec ensemble_spec() const;
};

// A plan file holds one experiment ("experiment") or several ("experiments"),
// sharing every other field.
std::vector<ExperimentPlan> plans_from_json(const json& j, const std::filesystem::path& base_dir = {});
std::vector<ExperimentPlan> load_plans(const std::filesystem::path& path);

struct PhaseTiming {
  std::string phase;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  int repeats = 0;
  std::size_t items = 0;  // rows or cells handled per repeat

  json to_json() const;
};

// Runs `body` `repeats` times and reports the wall-clock mean and the
// population standard deviation.
PhaseTiming time_phase(std::string phase, int repeats, std::size_t items, const std::function<void()>& body);

struct ReportRow {
  std::string section;  // table the row belongs to, e.g. "3 members, stacking"
  std::string label;    // "DT, SVM, KNN" or "GB_shape, ET_texture"
  std::string combiner;  // hard_vote, soft_vote, stacking or single
  std::vector<std::string> members;
  std::optional<ConfusionMatrix> matrix;  // absent when the row failed
  MetricSuite suite;
  std::string error;
  int rank = 0;  // 1-based within the section; 0 = unranked
  json extras = json::object();

  bool ok() const { return error.empty(); }
  json to_json() const;
};

struct ExperimentReport {
  std::string id;
  json header = json::object();
  std::vector<ReportRow> rows;
  std::vector<PhaseTiming> timing;
  json extras = json::object();

  // Without timing the JSON is a pure function of plan, data and seeds.
  json to_json(bool include_timing = true) const;
  std::string to_markdown() const;
  std::string to_csv() const;
  // Every successful row's suite recomputes from its matrix.
  bool consistent() const;
  const ReportRow* find(std::string_view label, std::string_view section = {}) const;
};

// Ranks successful rows by SDS then weighted F1 within each section; failed
// rows follow. Ties keep enumeration order.
void rank_rows(std::vector<ReportRow>& rows);

// Loads a feature table. Directories and manifests (a CSV with a `path`
// column) are extracted; when `extraction` is given it receives the per-cell
// extraction time.
LabeledDataset load_feature_table(const std::filesystem::path& path, const ExtractionOptions& opts = {},
                                  PhaseTiming* extraction = nullptr);

struct ExperimentData {
  LabeledDataset train;  // raw (unstandardized) features
  std::optional<LabeledDataset> validation;
  std::optional<PhaseTiming> extraction;
};

ExperimentData load_experiment_data(const ExperimentPlan& plan);

struct EvalFold {
  LabeledDataset train;
  LabeledDataset test;
};

// Train/test pairs of the protocol, standardized with each fold's training
// statistics.
std::vector<EvalFold> protocol_folds(const Protocol& protocol, const LabeledDataset& data, std::uint64_t seed);

// Every size-r subset of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t r);

ExperimentReport run_combination_sweep(const ExperimentPlan& plan, const ExperimentData& data);
ExperimentReport run_group_experiment(const ExperimentPlan& plan, const ExperimentData& data);
ExperimentReport run_specialist_experiment(const ExperimentPlan& plan, const ExperimentData& data);
ExperimentReport run_importance_experiment(const ExperimentPlan& plan, const ExperimentData& data);
ExperimentReport run_validation(const ExperimentPlan& plan, const ExperimentData& data);

ExperimentReport run_experiment(const ExperimentPlan& plan, const ExperimentData& data);
ExperimentReport run_experiment(const ExperimentPlan& plan);

// Metric suites of the reference matrices next to the reported scores.
ExperimentReport replay_fixtures();

// Writes <dir>/<id>.md, .csv and .json; returns the paths.
std::vector<std::filesystem::path> write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace rbc
