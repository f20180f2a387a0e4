#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbc/errors.hpp"

namespace rbc {

// Canonical class vocabulary. The index order (c, e, o) is used by every
// matrix, report and probability vector.
enum class ClassLabel : int { Circular = 0, Elongated = 1, Other = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"circular", "elongated",
                                                                         "other"};

std::string_view class_name(int index);
int parse_class(std::string_view name);  // throws Parse on unknown names

// 8-bit single- or multi-channel raster, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c = 1, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return width == 0 || height == 0; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Binary mask; nonzero = foreground.
using Mask = Image;

struct CellSample {
  std::string id;
  Image gray;                 // 1 channel
  std::optional<Image> rgb;   // 3 channels, same size as gray
  Mask mask;                  // 1 channel, same size as gray
  std::optional<int> label;

  // Throws EmptyRegion / InvalidArgument if the invariants do not hold.
  void validate() const;
};

// Builds a sample from an RGB (or gray) raster: gray = rounded BT.601 luma.
CellSample make_sample(std::string id, const Image& pixels, Mask mask, std::optional<int> label = {});

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  void append_row(std::span<const double> values);
  Matrix select_rows(std::span<const std::size_t> rows) const;
  Matrix select_cols(std::span<const std::size_t> cols) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// 64-bit FNV-1a over the ordered names, rendered as 16 hex digits.
std::string schema_digest(std::span<const std::string> names);

struct FeatureVector {
  std::vector<double> values;
  std::string schema_hash;
};

// Feature table with labels. Labels are canonical class indices, or -1 for
// unlabeled rows (prediction inputs).
struct LabeledDataset {
  std::vector<std::string> ids;
  std::vector<std::string> feature_names;
  Matrix features;
  std::vector<int> labels;
  int n_classes = kNumClasses;
  bool standardized = false;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return feature_names.size(); }
  std::string schema_hash() const { return schema_digest(feature_names); }
  std::vector<std::size_t> class_counts() const;
  bool fully_labeled() const;

  // Structural checks: row/label/id counts agree, labels in range, finite values.
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> rows) const;
  LabeledDataset select_columns(std::span<const std::size_t> cols) const;
  // Rows reordered by id (stable for duplicate ids).
  LabeledDataset sorted_by_id() const;
};

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k = kNumClasses);
  // Rows = true class, columns = predicted class.
  explicit ConfusionMatrix(std::vector<std::vector<std::int64_t>> counts);
  static ConfusionMatrix from_labels(std::span<const int> truth, std::span<const int> predicted, int k);

  int k() const { return k_; }
  std::int64_t operator()(int truth, int predicted) const { return counts_[idx(truth, predicted)]; }
  void add(int truth, int predicted, std::int64_t n = 1);
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int i) const;
  std::int64_t col_sum(int j) const;
  std::vector<std::vector<std::int64_t>> to_rows() const;

  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * k_ + j; }
  int k_;
  std::vector<std::int64_t> counts_;
};

// Collapses classes into groups; `groups` must partition {0..k-1}.
ConfusionMatrix merge_classes(const ConfusionMatrix& cm, const std::vector<std::vector<int>>& groups);

struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
};

// Draws from id-sorted samples so the result does not depend on ingestion order.
SplitResult dataset_split(const LabeledDataset& ds, double test_fraction, std::uint64_t seed,
                          bool stratified = true);

// Stratified k-fold assignment over the rows of `labels` (in their given
// order): returns the fold index of every row.
std::vector<int> stratified_folds(std::span<const int> labels, int n_classes, int n_folds,
                                  std::uint64_t seed);

}  // namespace rbc
