#pragma once

#include "rbc/learners.hpp"

namespace rbc {

void check_trainable(const LabeledDataset& train, LearnerKind kind);
void check_standardized(const LabeledDataset& train, const json& hp, LearnerKind kind);

inline json model_envelope(std::string_view kind, const LearnerConfig& cfg, std::size_t n_features, int n_classes,
                           json state) {
  return {{"learner_kind", std::string(kind)},
          {"config", cfg.to_json()},
          {"n_features", n_features},
          {"n_classes", n_classes},
          {"state", std::move(state)}};
}

inline Matrix matrix_from(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  require(data.size() == rows * cols, ErrorCode::Parse, "matrix payload has the wrong size");
  Matrix m(rows, cols);
  m.data() = data;
  return m;
}

}  // namespace rbc
