#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbc/types.hpp"

namespace rbc {

inline constexpr int kDefaultTargetSide = 72;

struct PointD {
  double x = 0.0;
  double y = 0.0;
};

struct PointI {
  int x = 0;
  int y = 0;
  bool operator==(const PointI&) const = default;
};

struct RegionGeometry {
  std::int64_t area = 0;          // pixel count
  double perimeter = 0.0;         // polygonal length of the (smoothed) boundary
  std::vector<PointI> contour;    // closed boundary, pixel centers, clockwise
  PointD centroid;
  std::vector<PointD> convex_hull;  // counter-clockwise, no repeated endpoint
  std::int64_t convex_area = 0;   // pixels whose centers fall inside the hull
  double convex_perimeter = 0.0;
  int bbox_width = 0;
  int bbox_height = 0;
  Mask region;                    // the selected 8-connected component only
};

// Largest 8-connected foreground component of `mask` (ties: first in raster
// order). Emits a warning when other components are discarded.
RegionGeometry extract_geometry(const Mask& mask);

// Boundary length of a closed 8-connected chain of pixel centers. The chain
// is low-pass filtered with a 3-point circular moving average before the
// polygonal length is taken, which removes the staircase bias of raw chain
// codes on slanted edges.
double contour_length(std::span<const PointI> contour);

double polygon_length(std::span<const PointD> polygon);

// Uniform scale to fit target_side x target_side, centered with zero padding.
// The mask is resampled nearest-neighbor, intensities bilinearly.
CellSample rescale_cell(const CellSample& sample, int target_side = kDefaultTargetSide);

// Maps [0,255] uniformly onto `levels` bins.
Image quantize_gray(const Image& gray, int levels);

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<std::string> names, std::vector<double> means, std::vector<double> stds);

  // Population statistics over every row of `train`.
  static Standardizer fit(const LabeledDataset& train);

  std::vector<double> apply(std::span<const double> values) const;
  FeatureVector apply(const FeatureVector& v) const;
  LabeledDataset apply(const LabeledDataset& ds) const;
  std::vector<double> invert(std::span<const double> values) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stds() const { return stds_; }
  std::string schema_hash() const { return schema_digest(names_); }
  // Digest over names and statistics; identifies the exact fitted state.
  std::string fingerprint() const;

 private:
  std::vector<std::string> names_;
  std::vector<double> means_;
  std::vector<double> stds_;
};

}  // namespace rbc
