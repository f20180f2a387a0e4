#include "rbc/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "rbc/random.hpp"

namespace rbc {

std::string_view class_name(int index) {
  require(index >= 0 && index < kNumClasses, ErrorCode::InvalidArgument,
          "class index out of range: " + std::to_string(index));
  return kClassNames[static_cast<std::size_t>(index)];
}

int parse_class(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassNames[static_cast<std::size_t>(i)] == name) return i;
  // single-letter aliases
  if (name == "c") return 0;
  if (name == "e") return 1;
  if (name == "o") return 2;
  fail(ErrorCode::Parse, "unknown class label '" + std::string(name) + "'");
}

void CellSample::validate() const {
  require(gray.channels == 1 && !gray.empty(), ErrorCode::InvalidArgument,
          "sample " + id + ": grayscale raster missing");
  require(mask.width == gray.width && mask.height == gray.height && mask.channels == 1,
          ErrorCode::InvalidArgument, "sample " + id + ": mask dimensions differ from pixels");
  if (rgb) {
    require(rgb->width == gray.width && rgb->height == gray.height && rgb->channels == 3,
            ErrorCode::InvalidArgument, "sample " + id + ": color raster dimensions differ");
  }
  const bool any = std::any_of(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v != 0; });
  require(any, ErrorCode::EmptyRegion, "sample " + id + ": mask has no foreground pixel");
}

CellSample make_sample(std::string id, const Image& pixels, Mask mask, std::optional<int> label) {
  CellSample s;
  s.id = std::move(id);
  s.label = label;
  s.mask = std::move(mask);
  if (pixels.channels == 1) {
    s.gray = pixels;
  } else {
    require(pixels.channels >= 3, ErrorCode::InvalidArgument, "unsupported channel count");
    s.gray = Image(pixels.width, pixels.height, 1);
    Image rgb(pixels.width, pixels.height, 3);
    for (int y = 0; y < pixels.height; ++y) {
      for (int x = 0; x < pixels.width; ++x) {
        const double r = pixels.at(x, y, 0), g = pixels.at(x, y, 1), b = pixels.at(x, y, 2);
        rgb.at(x, y, 0) = pixels.at(x, y, 0);
        rgb.at(x, y, 1) = pixels.at(x, y, 1);
        rgb.at(x, y, 2) = pixels.at(x, y, 2);
        s.gray.at(x, y) = static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
      }
    }
    s.rgb = std::move(rgb);
  }
  s.validate();
  return s;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require(values.size() == cols_, ErrorCode::InvalidArgument, "row width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> cols) const {
  Matrix out(rows_, cols.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = (*this)(r, cols[j]);
  return out;
}

std::string schema_digest(std::span<const std::string> names) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& n : names) {
    for (unsigned char c : n) mix(c);
    mix('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int y : labels)
    if (y >= 0 && y < n_classes) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

bool LabeledDataset::fully_labeled() const {
  return std::all_of(labels.begin(), labels.end(), [this](int y) { return y >= 0 && y < n_classes; });
}

void LabeledDataset::validate() const {
  require(features.rows() == labels.size() && ids.size() == labels.size(), ErrorCode::InvalidArgument,
          "dataset row counts disagree");
  require(features.rows() == 0 || features.cols() == feature_names.size(), ErrorCode::Schema,
          "dataset width differs from its feature-name list");
  for (int y : labels)
    require(y >= -1 && y < n_classes, ErrorCode::InvalidArgument, "label out of range");
  for (double v : features.data())
    require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite feature value");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.feature_names = feature_names;
  out.n_classes = n_classes;
  out.standardized = standardized;
  out.features = features.rows() == 0 && rows.empty() ? Matrix(0, dim()) : features.select_rows(rows);
  out.ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    out.ids.push_back(ids[r]);
    out.labels.push_back(labels[r]);
  }
  return out;
}

LabeledDataset LabeledDataset::select_columns(std::span<const std::size_t> cols) const {
  LabeledDataset out;
  out.ids = ids;
  out.labels = labels;
  out.n_classes = n_classes;
  out.standardized = standardized;
  out.features = features.select_cols(cols);
  for (std::size_t c : cols) out.feature_names.push_back(feature_names[c]);
  return out;
}

LabeledDataset LabeledDataset::sorted_by_id() const {
  auto order = iota_indices(size());
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return subset(order);
}

ConfusionMatrix::ConfusionMatrix(int k) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {
  require(k >= 1, ErrorCode::InvalidArgument, "confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::vector<std::int64_t>> counts)
    : ConfusionMatrix(static_cast<int>(counts.size())) {
  for (int i = 0; i < k_; ++i) {
    require(counts[static_cast<std::size_t>(i)].size() == static_cast<std::size_t>(k_), ErrorCode::InvalidArgument,
            "confusion matrix must be square");
    for (int j = 0; j < k_; ++j) {
      const auto v = counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      require(v >= 0, ErrorCode::InvalidArgument, "confusion matrix entries must be non-negative");
      counts_[idx(i, j)] = v;
    }
  }
}

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const int> truth, std::span<const int> predicted, int k) {
  require(truth.size() == predicted.size(), ErrorCode::InvalidArgument, "label streams differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t n) {
  require(truth >= 0 && truth < k_ && predicted >= 0 && predicted < k_, ErrorCode::InvalidArgument,
          "class index out of range in confusion matrix");
  counts_[idx(truth, predicted)] += n;
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < k_; ++i) t += counts_[idx(i, i)];
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int i) const {
  std::int64_t s = 0;
  for (int j = 0; j < k_; ++j) s += counts_[idx(i, j)];
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int j) const {
  std::int64_t s = 0;
  for (int i = 0; i < k_; ++i) s += counts_[idx(i, j)];
  return s;
}

std::vector<std::vector<std::int64_t>> ConfusionMatrix::to_rows() const {
  std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(k_));
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < k_; ++j) rows[static_cast<std::size_t>(i)].push_back(counts_[idx(i, j)]);
  return rows;
}

ConfusionMatrix merge_classes(const ConfusionMatrix& cm, const std::vector<std::vector<int>>& groups) {
  std::vector<int> group_of(static_cast<std::size_t>(cm.k()), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(!groups[g].empty(), ErrorCode::Partition, "empty group in class partition");
    for (int c : groups[g]) {
      require(c >= 0 && c < cm.k(), ErrorCode::Partition, "class index " + std::to_string(c) + " out of range");
      require(group_of[static_cast<std::size_t>(c)] < 0, ErrorCode::Partition,
              "class " + std::to_string(c) + " appears in more than one group");
      group_of[static_cast<std::size_t>(c)] = static_cast<int>(g);
    }
  }
  for (int c = 0; c < cm.k(); ++c)
    require(group_of[static_cast<std::size_t>(c)] >= 0, ErrorCode::Partition,
            "class " + std::to_string(c) + " is not covered by the partition");

  ConfusionMatrix out(static_cast<int>(groups.size()));
  for (int i = 0; i < cm.k(); ++i)
    for (int j = 0; j < cm.k(); ++j)
      if (cm(i, j) != 0) out.add(group_of[static_cast<std::size_t>(i)], group_of[static_cast<std::size_t>(j)], cm(i, j));
  return out;
}

SplitResult dataset_split(const LabeledDataset& ds, double test_fraction, std::uint64_t seed, bool stratified) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidArgument, "test fraction must lie in (0,1)");
  require(ds.size() > 0, ErrorCode::EmptyData, "cannot split an empty dataset");
  const LabeledDataset sorted = ds.sorted_by_id();
  Rng rng(seed);

  std::vector<std::size_t> test_rows;
  if (stratified) {
    require(sorted.fully_labeled(), ErrorCode::Stratification, "stratified split needs labels on every sample");
    const auto counts = sorted.class_counts();
    // Largest-remainder allocation: the test total matches round(n * fraction)
    // and every class lands within one sample of its exact quota.
    const std::size_t k = counts.size();
    std::vector<std::size_t> take(k, 0);
    std::vector<double> remainder(k, -1.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      require(counts[c] >= 2, ErrorCode::Stratification,
              "class '" + std::string(c < kNumClasses ? class_name(static_cast<int>(c)) : std::to_string(c)) +
                  "' has fewer than 2 samples");
      const double quota = static_cast<double>(counts[c]) * test_fraction;
      take[c] = static_cast<std::size_t>(std::floor(quota));
      remainder[c] = quota - std::floor(quota);
      assigned += take[c];
    }
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(sorted.size()) * test_fraction));
    std::vector<std::size_t> order = iota_indices(k);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; i < k && assigned < target; ++i) {
      if (remainder[order[i]] <= 0.0) break;
      ++take[order[i]];
      ++assigned;
    }
    for (int c = 0; c < sorted.n_classes; ++c) {
      const std::size_t n_c = counts[static_cast<std::size_t>(c)];
      if (n_c == 0) continue;
      std::vector<std::size_t> members;
      for (std::size_t r = 0; r < sorted.size(); ++r)
        if (sorted.labels[r] == c) members.push_back(r);
      rng.shuffle(members);
      const std::size_t t_c = std::clamp<std::size_t>(take[static_cast<std::size_t>(c)], 1, n_c - 1);
      test_rows.insert(test_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(t_c));
    }
  } else {
    auto all = iota_indices(sorted.size());
    rng.shuffle(all);
    auto take = static_cast<std::size_t>(std::llround(static_cast<double>(all.size()) * test_fraction));
    take = std::min(take, all.size());
    test_rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(test_rows.begin(), test_rows.end());
  std::vector<std::size_t> train_rows;
  std::size_t t = 0;
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    if (t < test_rows.size() && test_rows[t] == r) {
      ++t;
    } else {
      train_rows.push_back(r);
    }
  }
  return {sorted.subset(train_rows), sorted.subset(test_rows)};
}

std::vector<int> stratified_folds(std::span<const int> labels, int n_classes, int n_folds, std::uint64_t seed) {
  require(n_folds >= 2, ErrorCode::InvalidArgument, "need at least 2 folds");
  std::vector<int> fold(labels.size(), -1);
  Rng rng(seed);
  std::size_t offset = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (labels[r] == c) members.push_back(r);
    if (members.empty()) continue;
    require(members.size() >= static_cast<std::size_t>(n_folds), ErrorCode::Stratification,
            "class " + std::to_string(c) + " has " + std::to_string(members.size()) + " samples, fewer than " +
                std::to_string(n_folds) + " folds");
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i)
      fold[members[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(n_folds));
    offset += members.size();
  }
  for (int f : fold) require(f >= 0, ErrorCode::Stratification, "unlabeled row cannot be assigned to a fold");
  return fold;
}

}  // namespace rbc
