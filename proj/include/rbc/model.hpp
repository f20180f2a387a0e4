#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbc/ensemble.hpp"
#include "rbc/imaging.hpp"
#include "rbc/metrics.hpp"

namespace rbc {

inline constexpr int kFormatVersion = 1;

nlohmann::json standardizer_to_json(const Standardizer& z);
Standardizer standardizer_from_json(const nlohmann::json& j);

// A fitted learner or ensemble together with the schema and standardization
// it was trained under. Inputs are raw feature tables; the container checks
// the schema and standardizes before predicting.
class TrainedModel {
 public:
  TrainedModel(std::vector<std::string> feature_names, std::optional<Standardizer> standardizer,
               std::unique_ptr<Classifier> classifier, nlohmann::json spec);

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::string schema_hash() const { return schema_digest(feature_names_); }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  const Classifier& classifier() const { return *classifier_; }
  // LearnerConfig or EnsembleSpec JSON the model was fitted from.
  const nlohmann::json& spec() const { return spec_; }
  std::string kind() const { return classifier_->kind_name(); }

  // Schema check plus standardization. Throws Schema on any mismatch.
  LabeledDataset prepare(const LabeledDataset& raw) const;
  std::vector<double> prepare(std::span<const double> raw) const;

  Matrix predict_proba(const LabeledDataset& raw) const;
  std::vector<int> predict(const LabeledDataset& raw) const;
  Evaluation evaluate(const LabeledDataset& raw) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> feature_names_;
  std::optional<Standardizer> standardizer_;
  std::unique_ptr<Classifier> classifier_;
  nlohmann::json spec_;
};

// Rows are sorted by id before fitting, so ingestion order never changes the
// model. The standardizer is fitted on `raw` unless `standardize` is false.
TrainedModel train_model(const LabeledDataset& raw, const LearnerConfig& cfg, bool standardize = true);
TrainedModel train_model(const LabeledDataset& raw, const EnsembleSpec& spec, bool standardize = true);
// Dispatches on the JSON shape: an object with "members" is an ensemble spec,
// anything else a learner config.
TrainedModel train_model(const LabeledDataset& raw, const nlohmann::json& spec, std::uint64_t seed,
                         bool standardize = true);

}  // namespace rbc
