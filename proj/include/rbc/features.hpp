#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbc/imaging.hpp"
#include "rbc/types.hpp"

namespace rbc {

enum class FeatureGroup : int { Shape = 0, Texture = 1, Color = 2 };

inline constexpr std::size_t kShapeCount = 41;
inline constexpr std::size_t kTextureCount = 62;
inline constexpr std::size_t kColorCount = 18;
inline constexpr std::size_t kFeatureCount = kShapeCount + kTextureCount + kColorCount;

std::string_view group_name(FeatureGroup g);
FeatureGroup parse_group(std::string_view name);

struct FeatureEntry {
  std::string name;
  FeatureGroup group;
  std::size_t slot;  // position within its group
};

// Ordered 121-slot schema: shape[0,41) ++ texture[41,103) ++ color[103,121).
class FeatureRegistry {
 public:
  static const FeatureRegistry& instance();

  const std::vector<FeatureEntry>& entries() const { return entries_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t count(FeatureGroup g) const;
  const std::string& digest() const { return digest_; }

  // Names of one group in registry order.
  std::vector<std::string> group_names(FeatureGroup g) const;
  // Group of a registry name; throws Schema for unknown names.
  FeatureGroup group_of(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

 private:
  FeatureRegistry();
  std::vector<FeatureEntry> entries_;
  std::vector<std::string> names_;
  std::string digest_;
};

// One GLCM offset. Index n = 4*(distance-1) + angle_rank + 1, n in 1..12.
struct GlcmConfig {
  int distance = 1;    // 1..3
  int angle_deg = 0;   // 0, 45, 90, 135
  int index() const;
  int dx() const;
  int dy() const;  // image rows grow downward; 90 deg points up
  static GlcmConfig from_index(int n);
  static std::array<GlcmConfig, 12> all();
};

inline constexpr int kDefaultGlcmLevels = 32;

struct HaralickStats {
  double contrast = 0.0;
  double dissimilarity = 0.0;
  double homogeneity = 0.0;
  double energy = 0.0;
  double correlation = 0.0;
};

// Symmetric, normalized co-occurrence matrix (levels x levels, row-major)
// over pairs whose endpoints both lie inside the mask. `valid_pairs` receives
// the number of unordered pixel pairs counted.
std::vector<double> glcm(const Image& quantized, const Mask& mask, int levels, const GlcmConfig& cfg,
                         std::size_t* valid_pairs = nullptr);
HaralickStats haralick(std::span<const double> probabilities, int levels);

// Population moments with the degenerate (zero-variance) rule: skewness and
// excess kurtosis are 0.
struct Moments {
  double mean = 0.0;
  double std = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
};
Moments sample_moments(std::span<const double> values);

// Seven Hu invariants of the foreground of `mask`.
std::array<double, 7> hu_moments(const Mask& mask);

std::vector<double> extract_shape(const RegionGeometry& geom);
std::vector<double> extract_texture(const Image& gray, const Mask& mask, int levels = kDefaultGlcmLevels);
std::vector<double> extract_color(const Image& pixels, const Mask& mask);

struct ExtractionOptions {
  bool rescale = true;
  int target_side = kDefaultTargetSide;
  int glcm_levels = kDefaultGlcmLevels;
  std::array<bool, 3> groups = {true, true, true};  // shape, texture, color
};

// Names of the slots produced under the given group selection.
std::vector<std::string> selected_feature_names(const ExtractionOptions& opts);

FeatureVector extract_all(const CellSample& sample, const ExtractionOptions& opts = {});

}  // namespace rbc
