#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <unistd.h>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbc/random.hpp"
#include "rbc/types.hpp"

namespace rbc::test {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / ("rbc_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Mask disk_mask(int side, double cx, double cy, double r) {
  Mask m(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 255;
  return m;
}

inline Mask rect_mask(int w, int h, int x0, int y0, int rw, int rh) {
  Mask m(w, h);
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) m.at(x, y) = 255;
  return m;
}

inline Mask rotate90(const Mask& m) {
  Mask out(m.height, m.width, m.channels);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      for (int c = 0; c < m.channels; ++c) out.at(m.height - 1 - y, x, c) = m.at(x, y, c);
  return out;
}

// Gaussian blobs: class c centred at (sep*c, sep*(c%2)) in the first two
// dims; remaining dims are unit noise.
inline LabeledDataset blobs(std::size_t per_class, int classes, std::size_t dim, double sep, std::uint64_t seed,
                            bool standardized = true) {
  Rng rng(seed);
  LabeledDataset ds;
  for (std::size_t f = 0; f < dim; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  ds.features = Matrix(0, dim);
  ds.n_classes = classes;
  ds.standardized = standardized;
  std::vector<double> row(dim);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t f = 0; f < dim; ++f) row[f] = rng.normal();
      row[0] += sep * c;
      if (dim > 1) row[1] += sep * (c % 2);
      ds.features.append_row(row);
      ds.labels.push_back(c);
      ds.ids.push_back("s" + std::to_string(c) + "_" + std::to_string(i));
    }
  }
  return ds;
}

inline LabeledDataset random_dataset(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  for (std::size_t f = 0; f < dim; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  ds.features = Matrix(n, dim);
  ds.n_classes = classes;
  ds.standardized = true;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < dim; ++f) ds.features(i, f) = rng.normal();
    // Labels loosely tied to the first feature so trees have structure to find.
    const double s = ds.features(i, 0) + 0.7 * rng.normal();
    int label = s < -0.4 ? 0 : (s < 0.5 ? 1 : 2);
    ds.labels.push_back(label % classes);
    ds.ids.push_back("r" + std::to_string(i));
  }
  return ds;
}

// Small models for sweeps that only check protocol and bookkeeping.
inline std::map<std::string, nlohmann::json> cheap_hyperparameters() {
  return {{"RF", {{"n_trees", 8}}},
          {"ET", {{"n_trees", 8}}},
          {"GB", {{"n_rounds", 8}}},
          {"SVM", {{"epochs", 5}}},
          {"MLP", {{"hidden_units", 8}, {"epochs", 15}}}};
}

}  // namespace rbc::test
