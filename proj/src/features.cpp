#include "rbc/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace rbc {

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<const char*, kShapeCount> kShapeNames = {
    "area",          "perimeter",          "convex_area",  "convex_perimeter", "equivalent_diameter",
    "major_axis",    "minor_axis",         "elongation",   "aspect_ratio",     "eccentricity",
    "circularity",   "roundness",          "compactness",  "shape_factor",     "solidity",
    "extent",        "sphericity",         "modification_ratio", "r_factor",   "shape",
    "max_feret",     "min_feret",          "max_r",        "min_r",            "mean_r",
    "std_r",         "hu1",                "hu2",          "hu3",              "hu4",
    "hu5",           "hu6",                "hu7",          "fd1",              "fd2",
    "fd3",           "fd4",                "fd5",          "fd6",              "fd7",
    "fd8"};

constexpr std::array<const char*, 5> kHaralickNames = {"contrast", "dissimilarity", "homogeneity", "energy",
                                                       "correlation"};
constexpr std::array<const char*, 6> kColorChannels = {"red", "green", "blue", "hue", "saturation", "value"};
constexpr std::array<const char*, 3> kColorStats = {"mean", "std", "skewness"};

constexpr std::size_t kFourierSamples = 64;
constexpr std::size_t kFourierCount = 8;

}  // namespace

std::string_view group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Shape: return "shape";
    case FeatureGroup::Texture: return "texture";
    case FeatureGroup::Color: return "color";
  }
  return "?";
}

FeatureGroup parse_group(std::string_view name) {
  if (name == "shape") return FeatureGroup::Shape;
  if (name == "texture" || name == "txt") return FeatureGroup::Texture;
  if (name == "color" || name == "colour") return FeatureGroup::Color;
  fail(ErrorCode::Parse, "unknown feature group '" + std::string(name) + "'");
}

FeatureRegistry::FeatureRegistry() {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i) entries_.push_back({kShapeNames[i], FeatureGroup::Shape, i});
  entries_.push_back({"skewness", FeatureGroup::Texture, 0});
  entries_.push_back({"kurtosis", FeatureGroup::Texture, 1});
  for (int n = 1; n <= 12; ++n)
    for (const char* stat : kHaralickNames)
      entries_.push_back({std::string(stat) + std::to_string(n), FeatureGroup::Texture, entries_.size() - kShapeCount});
  for (const char* ch : kColorChannels)
    for (const char* st : kColorStats)
      entries_.push_back({std::string(ch) + "_" + st, FeatureGroup::Color, entries_.size() - kShapeCount - kTextureCount});
  for (const auto& e : entries_) names_.push_back(e.name);
  digest_ = schema_digest(names_);
}

const FeatureRegistry& FeatureRegistry::instance() {
  static const FeatureRegistry reg;
  return reg;
}

std::size_t FeatureRegistry::count(FeatureGroup g) const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [g](const auto& e) { return e.group == g; }));
}

std::vector<std::string> FeatureRegistry::group_names(FeatureGroup g) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.group == g) out.push_back(e.name);
  return out;
}

bool FeatureRegistry::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t FeatureRegistry::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  require(it != names_.end(), ErrorCode::Schema, "'" + std::string(name) + "' is not a registry feature");
  return static_cast<std::size_t>(it - names_.begin());
}

FeatureGroup FeatureRegistry::group_of(std::string_view name) const { return entries_[index_of(name)].group; }

int GlcmConfig::index() const {
  const int rank = angle_deg / 45;
  return 4 * (distance - 1) + rank + 1;
}

int GlcmConfig::dx() const {
  switch (angle_deg) {
    case 0: return distance;
    case 45: return distance;
    case 90: return 0;
    default: return -distance;
  }
}

int GlcmConfig::dy() const { return angle_deg == 0 ? 0 : -distance; }

GlcmConfig GlcmConfig::from_index(int n) {
  require(n >= 1 && n <= 12, ErrorCode::InvalidArgument, "GLCM config index must lie in 1..12");
  return {(n - 1) / 4 + 1, ((n - 1) % 4) * 45};
}

std::array<GlcmConfig, 12> GlcmConfig::all() {
  std::array<GlcmConfig, 12> out;
  for (int n = 1; n <= 12; ++n) out[static_cast<std::size_t>(n - 1)] = from_index(n);
  return out;
}

std::vector<double> glcm(const Image& quantized, const Mask& mask, int levels, const GlcmConfig& cfg,
                         std::size_t* valid_pairs) {
  require(levels >= 2 && levels <= 256, ErrorCode::InvalidArgument, "GLCM levels must lie in [2, 256]");
  const auto L = static_cast<std::size_t>(levels);
  std::vector<double> p(L * L, 0.0);
  const int dx = cfg.dx(), dy = cfg.dy();
  std::size_t pairs = 0;
  for (int y = 0; y < quantized.height; ++y) {
    const int ny = y + dy;
    if (ny < 0 || ny >= quantized.height) continue;
    for (int x = 0; x < quantized.width; ++x) {
      const int nx = x + dx;
      if (nx < 0 || nx >= quantized.width) continue;
      if (mask.at(x, y) == 0 || mask.at(nx, ny) == 0) continue;
      const std::size_t a = quantized.at(x, y), b = quantized.at(nx, ny);
      require(a < L && b < L, ErrorCode::InvalidArgument, "quantized value exceeds GLCM levels");
      p[a * L + b] += 1.0;
      p[b * L + a] += 1.0;
      ++pairs;
    }
  }
  if (valid_pairs) *valid_pairs = pairs;
  if (pairs > 0) {
    const double total = 2.0 * static_cast<double>(pairs);
    for (auto& v : p) v /= total;
  }
  return p;
}

HaralickStats haralick(std::span<const double> prob, int levels) {
  const auto L = static_cast<std::size_t>(levels);
  HaralickStats s;
  double mu_i = 0.0, mu_j = 0.0;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const double p = prob[i * L + j];
      mu_i += static_cast<double>(i) * p;
      mu_j += static_cast<double>(j) * p;
    }
  double var_i = 0.0, var_j = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const double p = prob[i * L + j];
      if (p == 0.0) continue;
      const double d = static_cast<double>(i) - static_cast<double>(j);
      s.contrast += p * d * d;
      s.dissimilarity += p * std::abs(d);
      s.homogeneity += p / (1.0 + d * d);
      s.energy += p * p;
      const double di = static_cast<double>(i) - mu_i, dj = static_cast<double>(j) - mu_j;
      var_i += p * di * di;
      var_j += p * dj * dj;
      cov += p * di * dj;
    }
  }
  const double denom = std::sqrt(var_i) * std::sqrt(var_j);
  s.correlation = denom > 1e-15 ? cov / denom : 0.0;
  return s;
}

Moments sample_moments(std::span<const double> values) {
  Moments m;
  if (values.empty()) return m;
  const auto n = static_cast<double>(values.size());
  for (double v : values) m.mean += v;
  m.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - m.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.std = std::sqrt(m2);
  if (m.std > 1e-12 * std::max(1.0, std::abs(m.mean))) {
    m.skewness = m3 / (m2 * m.std);
    m.kurtosis = m4 / (m2 * m2) - 3.0;
  } else {
    m.std = 0.0;
  }
  return m;
}

std::array<double, 7> hu_moments(const Mask& mask) {
  double m00 = 0.0, m10 = 0.0, m01 = 0.0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y) != 0) {
        m00 += 1.0;
        m10 += x;
        m01 += y;
      }
  require(m00 > 0.0, ErrorCode::EmptyRegion, "Hu moments of an empty mask");
  const double cx = m10 / m00, cy = m01 / m00;
  double mu20 = 0, mu02 = 0, mu11 = 0, mu30 = 0, mu03 = 0, mu21 = 0, mu12 = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y) != 0) {
        const double dx = x - cx, dy = y - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
        mu30 += dx * dx * dx;
        mu03 += dy * dy * dy;
        mu21 += dx * dx * dy;
        mu12 += dx * dy * dy;
      }
  const double s2 = m00 * m00, s3 = std::pow(m00, 2.5);
  const double n20 = mu20 / s2, n02 = mu02 / s2, n11 = mu11 / s2;
  const double n30 = mu30 / s3, n03 = mu03 / s3, n21 = mu21 / s3, n12 = mu12 / s3;

  const double a = n30 + n12, b = n21 + n03;
  std::array<double, 7> h{};
  h[0] = n20 + n02;
  h[1] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
  h[2] = (n30 - 3 * n12) * (n30 - 3 * n12) + (3 * n21 - n03) * (3 * n21 - n03);
  h[3] = a * a + b * b;
  h[4] = (n30 - 3 * n12) * a * (a * a - 3 * b * b) + (3 * n21 - n03) * b * (3 * a * a - b * b);
  h[5] = (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b;
  h[6] = (3 * n21 - n03) * a * (a * a - 3 * b * b) - (n30 - 3 * n12) * b * (3 * a * a - b * b);
  return h;
}

namespace {

struct EllipseFit {
  double major = 0.0;
  double minor = 0.0;
  double eccentricity = 0.0;
};

EllipseFit fit_ellipse(const Mask& region, const PointD& c) {
  double mu20 = 0, mu02 = 0, mu11 = 0, n = 0;
  for (int y = 0; y < region.height; ++y)
    for (int x = 0; x < region.width; ++x)
      if (region.at(x, y) != 0) {
        const double dx = x - c.x, dy = y - c.y;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
        n += 1.0;
      }
  mu20 /= n;
  mu02 /= n;
  mu11 /= n;
  const double mid = 0.5 * (mu20 + mu02);
  const double rad = std::sqrt(0.25 * (mu20 - mu02) * (mu20 - mu02) + mu11 * mu11);
  const double l1 = mid + rad, l2 = std::max(0.0, mid - rad);
  EllipseFit e;
  e.major = 4.0 * std::sqrt(l1);
  e.minor = 4.0 * std::sqrt(l2);
  e.eccentricity = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
  return e;
}

// Max caliper = hull diameter; min caliper = smallest hull width, which is
// attained perpendicular to some hull edge.
std::pair<double, double> feret_diameters(const std::vector<PointD>& hull) {
  double max_d = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j)
      max_d = std::max(max_d, std::hypot(hull[i].x - hull[j].x, hull[i].y - hull[j].y));
  if (hull.size() < 3) return {max_d, 0.0};
  double min_w = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const PointD& a = hull[i];
    const PointD& b = hull[(i + 1) % hull.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len <= 0.0) continue;
    double w = 0.0;
    for (const auto& p : hull) w = std::max(w, std::abs((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / len);
    min_w = std::min(min_w, w);
  }
  return {max_d, min_w};
}

// Centroid-distance signature resampled uniformly by arc length.
std::vector<double> radial_signature(const std::vector<PointI>& contour, const PointD& c, std::size_t samples) {
  const std::size_t n = contour.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = contour[i];
    const auto& b = contour[(i + 1) % n];
    cum[i + 1] = cum[i] + std::hypot(double(b.x - a.x), double(b.y - a.y));
  }
  const double total = cum[n];
  std::vector<double> sig(samples);
  std::size_t seg = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = total * static_cast<double>(s) / static_cast<double>(samples);
    while (seg + 1 < n && cum[seg + 1] <= t) ++seg;
    const auto& a = contour[seg];
    const auto& b = contour[(seg + 1) % n];
    const double span = cum[seg + 1] - cum[seg];
    const double f = span > 0.0 ? (t - cum[seg]) / span : 0.0;
    const double x = a.x + f * (b.x - a.x), y = a.y + f * (b.y - a.y);
    sig[s] = std::hypot(x - c.x, y - c.y);
  }
  return sig;
}

}  // namespace

std::vector<double> extract_shape(const RegionGeometry& g) {
  require(g.area > 0, ErrorCode::EmptyRegion, "shape features of an empty region");
  const auto area = static_cast<double>(g.area);
  const EllipseFit ell = fit_ellipse(g.region, g.centroid);
  require(ell.minor > 1e-9, ErrorCode::DegenerateShape, "degenerate shape: minor_axis is zero");
  require(g.contour.size() >= 3, ErrorCode::DegenerateShape, "degenerate shape: contour has fewer than 3 points");

  const auto [max_feret, min_feret] = feret_diameters(g.convex_hull);
  require(max_feret > 0.0, ErrorCode::DegenerateShape, "degenerate shape: max_feret is zero");

  std::vector<double> radii;
  radii.reserve(g.contour.size());
  for (const auto& p : g.contour) radii.push_back(std::hypot(p.x - g.centroid.x, p.y - g.centroid.y));
  const Moments rm = sample_moments(radii);
  const double max_r = *std::max_element(radii.begin(), radii.end());
  const double min_r = *std::min_element(radii.begin(), radii.end());
  require(max_r > 0.0, ErrorCode::DegenerateShape, "degenerate shape: max_r is zero");

  const auto hu = hu_moments(g.region);

  const auto sig = radial_signature(g.contour, g.centroid, kFourierSamples);
  std::array<double, kFourierCount + 1> fd_mag{};
  for (std::size_t k = 0; k <= kFourierCount; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t s = 0; s < sig.size(); ++s) {
      const double ang = -2.0 * kPi * static_cast<double>(k * s) / static_cast<double>(sig.size());
      acc += sig[s] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    fd_mag[k] = std::abs(acc);
  }
  require(fd_mag[0] > 0.0, ErrorCode::DegenerateShape, "degenerate shape: fd0 is zero");

  const double P = g.perimeter, CP = g.convex_perimeter;
  std::vector<double> f;
  f.reserve(kShapeCount);
  f.push_back(area);
  f.push_back(P);
  f.push_back(static_cast<double>(g.convex_area));
  f.push_back(CP);
  f.push_back(std::sqrt(4.0 * area / kPi));
  f.push_back(ell.major);
  f.push_back(ell.minor);
  f.push_back(1.0 - ell.minor / ell.major);
  f.push_back(ell.major / ell.minor);
  f.push_back(ell.eccentricity);
  f.push_back(4.0 * kPi * area / (P * P));
  f.push_back(4.0 * area / (kPi * ell.major * ell.major));
  f.push_back(P * P / area);
  f.push_back(4.0 * kPi * area / (CP * CP));
  f.push_back(area / static_cast<double>(g.convex_area));
  f.push_back(area / (static_cast<double>(g.bbox_width) * g.bbox_height));
  f.push_back(min_r / max_r);
  f.push_back(2.0 * min_r / max_feret);
  f.push_back(CP / (kPi * max_feret));
  f.push_back(area / (ell.major * ell.minor));
  f.push_back(max_feret);
  f.push_back(min_feret);
  f.push_back(max_r);
  f.push_back(min_r);
  f.push_back(rm.mean);
  f.push_back(rm.std);
  for (double h : hu) f.push_back(h);
  for (std::size_t k = 1; k <= kFourierCount; ++k) f.push_back(fd_mag[k] / fd_mag[0]);
  return f;
}

std::vector<double> extract_texture(const Image& gray, const Mask& mask, int levels) {
  require(gray.channels == 1, ErrorCode::InvalidArgument, "texture features need a grayscale raster");
  require(mask.width == gray.width && mask.height == gray.height, ErrorCode::InvalidArgument,
          "mask dimensions differ from pixels");
  std::vector<double> interior;
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x)
      if (mask.at(x, y) != 0) interior.push_back(gray.at(x, y));
  require(interior.size() >= 4, ErrorCode::InsufficientTexture,
          "texture needs at least 4 mask-interior pixels, got " + std::to_string(interior.size()));

  std::vector<double> f;
  f.reserve(kTextureCount);
  const Moments m = sample_moments(interior);
  f.push_back(m.skewness);
  f.push_back(m.kurtosis);

  const Image q = quantize_gray(gray, levels);
  for (const auto& cfg : GlcmConfig::all()) {
    std::size_t pairs = 0;
    const auto p = glcm(q, mask, levels, cfg, &pairs);
    require(pairs >= 4, ErrorCode::InsufficientTexture,
            "GLCM config " + std::to_string(cfg.index()) + " (d=" + std::to_string(cfg.distance) + ", " +
                std::to_string(cfg.angle_deg) + " deg) has only " + std::to_string(pairs) + " valid pixel pairs");
    const HaralickStats s = haralick(p, levels);
    f.insert(f.end(), {s.contrast, s.dissimilarity, s.homogeneity, s.energy, s.correlation});
  }
  return f;
}

std::vector<double> extract_color(const Image& pixels, const Mask& mask) {
  require(mask.width == pixels.width && mask.height == pixels.height, ErrorCode::InvalidArgument,
          "mask dimensions differ from pixels");
  require(pixels.channels == 1 || pixels.channels == 3, ErrorCode::InvalidArgument, "color features need 1 or 3 channels");
  std::array<std::vector<double>, 6> ch;
  for (int y = 0; y < pixels.height; ++y) {
    for (int x = 0; x < pixels.width; ++x) {
      if (mask.at(x, y) == 0) continue;
      const int r = pixels.at(x, y, 0);
      const int g = pixels.channels == 3 ? pixels.at(x, y, 1) : r;
      const int b = pixels.channels == 3 ? pixels.at(x, y, 2) : r;
      const int mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double delta = mx - mn;
      double h = 0.0;
      if (delta > 0) {
        if (mx == r) {
          h = std::fmod((g - b) / delta, 6.0);
        } else if (mx == g) {
          h = (b - r) / delta + 2.0;
        } else {
          h = (r - g) / delta + 4.0;
        }
        h /= 6.0;
        if (h < 0.0) h += 1.0;
      }
      ch[0].push_back(r);
      ch[1].push_back(g);
      ch[2].push_back(b);
      ch[3].push_back(h);
      ch[4].push_back(mx > 0 ? delta / mx : 0.0);
      ch[5].push_back(mx / 255.0);
    }
  }
  require(!ch[0].empty(), ErrorCode::EmptyRegion, "color features of an empty mask interior");

  std::vector<double> f;
  f.reserve(kColorCount);
  for (std::size_t c = 0; c < 6; ++c) {
    if (c == 3) {
      // Hue is an angle: circular mean, then moments of the wrapped deviations.
      double sx = 0.0, sy = 0.0;
      for (double h : ch[3]) {
        sx += std::cos(2.0 * kPi * h);
        sy += std::sin(2.0 * kPi * h);
      }
      double mean = (std::abs(sx) < 1e-12 && std::abs(sy) < 1e-12) ? 0.0 : std::atan2(sy, sx) / (2.0 * kPi);
      if (mean < 0.0) mean += 1.0;
      std::vector<double> dev;
      dev.reserve(ch[3].size());
      for (double h : ch[3]) {
        double d = h - mean;
        d -= std::round(d);
        dev.push_back(d);
      }
      double m2 = 0.0, m3 = 0.0;
      for (double d : dev) {
        m2 += d * d;
        m3 += d * d * d;
      }
      m2 /= static_cast<double>(dev.size());
      m3 /= static_cast<double>(dev.size());
      const double sd = std::sqrt(m2);
      f.push_back(mean);
      f.push_back(sd);
      f.push_back(sd > 1e-12 ? m3 / (m2 * sd) : 0.0);
    } else {
      const Moments m = sample_moments(ch[c]);
      f.push_back(m.mean);
      f.push_back(m.std);
      f.push_back(m.skewness);
    }
  }
  return f;
}

std::vector<std::string> selected_feature_names(const ExtractionOptions& opts) {
  std::vector<std::string> names;
  const auto& reg = FeatureRegistry::instance();
  for (const auto& e : reg.entries())
    if (opts.groups[static_cast<std::size_t>(e.group)]) names.push_back(e.name);
  return names;
}

FeatureVector extract_all(const CellSample& input, const ExtractionOptions& opts) {
  require(opts.groups[0] || opts.groups[1] || opts.groups[2], ErrorCode::InvalidArgument, "no feature group selected");
  input.validate();
  const CellSample sample = opts.rescale ? rescale_cell(input, opts.target_side) : input;
  const RegionGeometry geom = extract_geometry(sample.mask);

  auto with_context = [&](const char* what, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.code(), "sample " + sample.id + ": " + what + " features: " + e.what());
    }
  };

  FeatureVector fv;
  fv.values.reserve(kFeatureCount);
  if (opts.groups[0]) {
    const auto s = with_context("shape", [&] { return extract_shape(geom); });
    fv.values.insert(fv.values.end(), s.begin(), s.end());
  }
  if (opts.groups[1]) {
    const auto t = with_context("texture", [&] { return extract_texture(sample.gray, geom.region, opts.glcm_levels); });
    fv.values.insert(fv.values.end(), t.begin(), t.end());
  }
  if (opts.groups[2]) {
    const Image& px = sample.rgb ? *sample.rgb : sample.gray;
    const auto c = with_context("color", [&] { return extract_color(px, geom.region); });
    fv.values.insert(fv.values.end(), c.begin(), c.end());
  }
  const auto names = selected_feature_names(opts);
  for (std::size_t i = 0; i < fv.values.size(); ++i)
    require(std::isfinite(fv.values[i]), ErrorCode::DegenerateShape,
            "sample " + sample.id + ": feature " + names[i] + " is not finite");
  fv.schema_hash = schema_digest(names);
  return fv;
}

}  // namespace rbc
