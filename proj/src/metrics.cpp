#include "rbc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rbc/learners.hpp"

namespace rbc {

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  require(cm.k() > 0 && cm.total() > 0, ErrorCode::EmptyData, "confusion matrix is empty");
}

double ratio(double num, double den, bool& degenerate) {
  if (den == 0.0) {
    degenerate = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

double sds_score(const ConfusionMatrix& cm, int normal_class) {
  require(normal_class >= 0 && normal_class < cm.k(), ErrorCode::InvalidArgument,
          "normal class " + std::to_string(normal_class) + " out of range");
  std::vector<int> abnormal;
  for (int c = 0; c < cm.k(); ++c)
    if (c != normal_class) abnormal.push_back(c);
  return sds_score(cm, {normal_class}, abnormal);
}

double sds_score(const ConfusionMatrix& cm, const std::vector<int>& normal_group,
                 const std::vector<int>& abnormal_group) {
  return accuracy(merge_classes(cm, {normal_group, abnormal_group}));
}

F1Scores f1_scores(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  F1Scores out;
  const double total = static_cast<double>(cm.total());
  for (int c = 0; c < cm.k(); ++c) {
    ClassScores s;
    const double tp = static_cast<double>(cm(c, c));
    s.support = cm.row_sum(c);
    s.precision = ratio(tp, static_cast<double>(cm.col_sum(c)), s.degenerate);
    s.recall = ratio(tp, static_cast<double>(s.support), s.degenerate);
    s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall, s.degenerate);
    out.macro += s.f1;
    out.weighted += s.f1 * static_cast<double>(s.support);
    out.per_class.push_back(s);
  }
  out.macro /= cm.k();
  out.weighted /= total;
  out.micro = accuracy(cm);
  return out;
}

double cba(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  for (int c = 0; c < cm.k(); ++c) {
    const auto den = std::max(cm.row_sum(c), cm.col_sum(c));
    if (den > 0) sum += static_cast<double>(cm(c, c)) / static_cast<double>(den);
  }
  return sum / cm.k();
}

double mcc(const ConfusionMatrix& cm, bool* degenerate) {
  require_nonempty(cm);
  const double s = static_cast<double>(cm.total());
  const double c = static_cast<double>(cm.trace());
  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (int k = 0; k < cm.k(); ++k) {
    const double p = static_cast<double>(cm.col_sum(k));
    const double t = static_cast<double>(cm.row_sum(k));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double den = std::sqrt((s * s - pp) * (s * s - tt));
  if (degenerate) *degenerate = den == 0.0;
  if (den == 0.0) return 0.0;
  return (c * s - pt) / den;
}

MetricSuite compute_suite(const ConfusionMatrix& cm, int normal_class) {
  MetricSuite m;
  m.accuracy = accuracy(cm);
  const auto f1 = f1_scores(cm);
  m.f1_macro = f1.macro;
  m.f1_weighted = f1.weighted;
  m.f1_micro = f1.micro;
  m.per_class = f1.per_class;
  m.sds = cm.k() >= 2 ? sds_score(cm, normal_class) : m.accuracy;
  m.cba = cba(cm);
  m.mcc = mcc(cm, &m.mcc_degenerate);
  return m;
}

nlohmann::json MetricSuite::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per.push_back({{"class", c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c)},
                   {"precision", per_class[c].precision},
                   {"recall", per_class[c].recall},
                   {"f1", per_class[c].f1},
                   {"support", per_class[c].support},
                   {"degenerate", per_class[c].degenerate}});
  }
  return {{"accuracy", accuracy},   {"f1_macro", f1_macro}, {"f1_weighted", f1_weighted},
          {"f1_micro", f1_micro},   {"sds", sds},           {"cba", cba},
          {"mcc", mcc},             {"mcc_degenerate", mcc_degenerate}, {"per_class", per}};
}

double metric_value(const MetricSuite& suite, std::string_view id) {
  if (id == "accuracy") return suite.accuracy;
  if (id == "f1_macro") return suite.f1_macro;
  if (id == "f1_weighted" || id == "f1") return suite.f1_weighted;
  if (id == "f1_micro") return suite.f1_micro;
  if (id == "sds") return suite.sds;
  if (id == "cba") return suite.cba;
  if (id == "mcc") return suite.mcc;
  fail(ErrorCode::InvalidArgument, "unknown metric '" + std::string(id) + "'");
}

const std::vector<std::string>& metric_ids() {
  static const std::vector<std::string> ids = {"accuracy", "f1_macro", "f1_weighted", "f1_micro", "sds", "cba", "mcc"};
  return ids;
}

std::string format_percent(double fraction) {
  require(std::isfinite(fraction), ErrorCode::InvalidArgument, "cannot render a non-finite percentage");
  // The 1e-9 nudge keeps values such as 93.825 (stored as 93.82499...) on the
  // half-up side.
  const double hundredths = std::floor(fraction * 10000.0 + 0.5 + 1e-9);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
  return buf;
}

nlohmann::json matrix_to_json(const ConfusionMatrix& cm) { return cm.to_rows(); }

ConfusionMatrix matrix_from_json(const nlohmann::json& j) {
  require(j.is_array(), ErrorCode::Parse, "confusion matrix must be an array of rows");
  return ConfusionMatrix(j.get<std::vector<std::vector<std::int64_t>>>());
}

ConfusionMatrix matrix_from_csv(const std::string& text) {
  std::vector<std::vector<std::int64_t>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t,;") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\"");
      const auto e = cell.find_last_not_of(" \t\"");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    auto numeric = [](const std::string& s) {
      if (s.empty()) return false;
      std::size_t pos = 0;
      try {
        std::stoll(s, &pos);
      } catch (...) {
        return false;
      }
      return pos == s.size();
    };
    std::vector<std::int64_t> row;
    bool skipped_label = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (numeric(cells[i])) {
        row.push_back(std::stoll(cells[i]));
      } else if (i == 0 && !skipped_label) {
        skipped_label = true;
      } else {
        row.clear();
        break;
      }
    }
    if (row.empty()) {
      require(rows.empty(), ErrorCode::Parse, "non-numeric row after matrix body: '" + line + "'");
      continue;  // header
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::Parse, "no matrix rows found");
  return ConfusionMatrix(std::move(rows));
}

Evaluation evaluate(const Classifier& model, const LabeledDataset& test) {
  require(test.size() > 0, ErrorCode::EmptyData, "evaluation set is empty");
  require(test.fully_labeled(), ErrorCode::InvalidArgument, "evaluation set has unlabeled rows");
  require(test.dim() == model.n_features(), ErrorCode::Schema,
          "model expects " + std::to_string(model.n_features()) + " features, data has " +
              std::to_string(test.dim()));
  Evaluation ev{ConfusionMatrix(model.n_classes()), {}, model.predict(test.features)};
  for (std::size_t i = 0; i < test.size(); ++i) ev.matrix.add(test.labels[i], ev.predictions[i]);
  ev.suite = compute_suite(ev.matrix);
  return ev;
}

}  // namespace rbc
