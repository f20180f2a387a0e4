#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rbc/types.hpp"

namespace rbc {

class Classifier;

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;  // true count (row sum)
  bool degenerate = false;   // a zero denominator was replaced by 0
};

struct F1Scores {
  std::vector<ClassScores> per_class;
  double macro = 0.0;
  double weighted = 0.0;
  double micro = 0.0;
};

struct MetricSuite {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  double f1_micro = 0.0;
  double sds = 0.0;
  double cba = 0.0;
  double mcc = 0.0;
  bool mcc_degenerate = false;
  std::vector<ClassScores> per_class;

  nlohmann::json to_json() const;
};

double accuracy(const ConfusionMatrix& cm);

// Accuracy after collapsing every class except `normal_class` into one
// abnormal group: confusions inside the abnormal group count as correct.
double sds_score(const ConfusionMatrix& cm, int normal_class = 0);
// General form over an explicit two-group partition {normal_group, abnormal_group}.
double sds_score(const ConfusionMatrix& cm, const std::vector<int>& normal_group,
                 const std::vector<int>& abnormal_group);

F1Scores f1_scores(const ConfusionMatrix& cm);

// Class balance accuracy: mean of diag_i / max(row_i, col_i).
double cba(const ConfusionMatrix& cm);

// Multiclass Matthews correlation (Gorodkin R_k). Zero when the denominator
// vanishes; `degenerate` reports that case.
double mcc(const ConfusionMatrix& cm, bool* degenerate = nullptr);

MetricSuite compute_suite(const ConfusionMatrix& cm, int normal_class = 0);

// Scalar lookup by id: accuracy, f1_macro, f1_weighted, f1_micro, sds, cba, mcc.
double metric_value(const MetricSuite& suite, std::string_view id);
const std::vector<std::string>& metric_ids();

// Percent with two decimals, half-up: 0.938195 -> "93.82".
std::string format_percent(double fraction);

nlohmann::json matrix_to_json(const ConfusionMatrix& cm);
ConfusionMatrix matrix_from_json(const nlohmann::json& j);

// Parses a k x k integer matrix from CSV text. A header row and a leading
// label column are skipped when they are not numeric.
ConfusionMatrix matrix_from_csv(const std::string& text);

struct Evaluation {
  ConfusionMatrix matrix;
  MetricSuite suite;
  std::vector<int> predictions;
};

// Predicts every row of `test` and scores it. The caller is responsible for
// the schema match between model and data.
Evaluation evaluate(const Classifier& model, const LabeledDataset& test);

}  // namespace rbc
