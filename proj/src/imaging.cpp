#include "rbc/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>

namespace rbc {

namespace {

// Clockwise in image coordinates (y grows downward), starting East.
constexpr std::array<PointI, 8> kDirs = {{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

int dir_index(int dx, int dy) {
  for (int i = 0; i < 8; ++i)
    if (kDirs[static_cast<std::size_t>(i)].x == dx && kDirs[static_cast<std::size_t>(i)].y == dy) return i;
  return -1;
}

Mask largest_component(const Mask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<int> label(mask.pixel_count(), -1);
  std::vector<std::int64_t> sizes;
  std::deque<PointI> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      if (mask.data[at] == 0 || label[at] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      std::int64_t count = 0;
      label[at] = id;
      queue.push_back({x, y});
      while (!queue.empty()) {
        const PointI p = queue.front();
        queue.pop_front();
        ++count;
        for (const auto& d : kDirs) {
          const int nx = p.x + d.x, ny = p.y + d.y;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t n_at = static_cast<std::size_t>(ny) * w + nx;
          if (mask.data[n_at] != 0 && label[n_at] < 0) {
            label[n_at] = id;
            queue.push_back({nx, ny});
          }
        }
      }
      sizes.push_back(count);
    }
  }
  require(!sizes.empty(), ErrorCode::EmptyRegion, "mask has no foreground pixel");
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  if (sizes.size() > 1) {
    log_warning("mask has " + std::to_string(sizes.size()) + " components; keeping the largest (" +
                std::to_string(sizes[static_cast<std::size_t>(best)]) + " px)");
  }
  Mask out(w, h, 1, 0);
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] == best) out.data[i] = 255;
  return out;
}

// Moore-neighbour tracing with Jacob's stopping criterion.
std::vector<PointI> trace_contour(const Mask& region) {
  const int w = region.width, h = region.height;
  auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && region.at(x, y) != 0; };

  PointI start{-1, -1};
  for (int y = 0; y < h && start.x < 0; ++y)
    for (int x = 0; x < w; ++x)
      if (region.at(x, y) != 0) {
        start = {x, y};
        break;
      }

  std::vector<PointI> contour{start};
  // The west neighbour of the first raster-order pixel is background.
  int back = 4;
  PointI cur = start;
  int first_move = -1;
  for (std::size_t guard = 0; guard < 4 * region.pixel_count() + 8; ++guard) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (fg(cur.x + kDirs[static_cast<std::size_t>(d)].x, cur.y + kDirs[static_cast<std::size_t>(d)].y)) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    if (cur == start) {
      if (first_move < 0) {
        first_move = found;
      } else if (found == first_move) {
        break;
      }
    }
    // Backtrack point: the neighbour examined just before `found`.
    const int prev = (found + 7) % 8;
    const PointI bt{cur.x + kDirs[static_cast<std::size_t>(prev)].x, cur.y + kDirs[static_cast<std::size_t>(prev)].y};
    const PointI next{cur.x + kDirs[static_cast<std::size_t>(found)].x, cur.y + kDirs[static_cast<std::size_t>(found)].y};
    back = dir_index(bt.x - next.x, bt.y - next.y);
    cur = next;
    if (cur == start) continue;
    contour.push_back(cur);
  }
  return contour;
}

double cross(const PointD& o, const PointD& a, const PointD& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<PointD> convex_hull(std::vector<PointD> pts) {
  std::sort(pts.begin(), pts.end(), [](const PointD& a, const PointD& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const PointD& a, const PointD& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;
  std::vector<PointD> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

double polygon_length(std::span<const PointD> polygon) {
  if (polygon.size() < 2) return 0.0;
  double len = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const PointD& a = polygon[i];
    const PointD& b = polygon[(i + 1) % polygon.size()];
    len += std::hypot(b.x - a.x, b.y - a.y);
  }
  return len;
}

double contour_length(std::span<const PointI> contour) {
  const std::size_t n = contour.size();
  if (n < 2) return 0.0;
  constexpr std::size_t kHalfWindow = 1;
  std::vector<PointD> smooth(n);
  if (n <= 2 * kHalfWindow + 1) {
    for (std::size_t i = 0; i < n; ++i) smooth[i] = {double(contour[i].x), double(contour[i].y)};
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double sx = 0.0, sy = 0.0;
      for (std::size_t k = 0; k <= 2 * kHalfWindow; ++k) {
        const auto& p = contour[(i + n + k - kHalfWindow) % n];
        sx += p.x;
        sy += p.y;
      }
      smooth[i] = {sx / (2 * kHalfWindow + 1), sy / (2 * kHalfWindow + 1)};
    }
  }
  return polygon_length(smooth);
}

RegionGeometry extract_geometry(const Mask& mask) {
  require(mask.channels == 1 && !mask.empty(), ErrorCode::InvalidArgument, "mask must be a non-empty single-channel raster");
  RegionGeometry g;
  g.region = largest_component(mask);

  int min_x = mask.width, min_y = mask.height, max_x = -1, max_y = -1;
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (g.region.at(x, y) == 0) continue;
      ++g.area;
      sx += x;
      sy += y;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  g.centroid = {sx / static_cast<double>(g.area), sy / static_cast<double>(g.area)};
  g.bbox_width = max_x - min_x + 1;
  g.bbox_height = max_y - min_y + 1;

  g.contour = trace_contour(g.region);
  g.perimeter = g.contour.size() < 2 ? 1.0 : contour_length(g.contour);

  std::vector<PointD> pts;
  pts.reserve(g.contour.size());
  for (const auto& p : g.contour) pts.push_back({double(p.x), double(p.y)});
  g.convex_hull = convex_hull(pts);
  g.convex_perimeter = g.convex_hull.size() < 2 ? 1.0 : polygon_length(g.convex_hull);

  if (g.convex_hull.size() < 3) {
    g.convex_area = g.area;
  } else {
    const auto& hull = g.convex_hull;
    for (int y = min_y; y <= max_y; ++y) {
      for (int x = min_x; x <= max_x; ++x) {
        const PointD p{double(x), double(y)};
        bool inside = true;
        for (std::size_t i = 0; i < hull.size() && inside; ++i)
          inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= -1e-9;
        if (inside) ++g.convex_area;
      }
    }
    g.convex_area = std::max(g.convex_area, g.area);
  }
  return g;
}

CellSample rescale_cell(const CellSample& sample, int target_side) {
  require(target_side >= 16, ErrorCode::InvalidArgument, "target side must be at least 16 px");
  sample.validate();
  const int w = sample.gray.width, h = sample.gray.height;
  const double scale = static_cast<double>(target_side) / std::max(w, h);
  const int sw = std::max(1, static_cast<int>(std::lround(w * scale)));
  const int sh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int off_x = (target_side - sw) / 2, off_y = (target_side - sh) / 2;

  CellSample out;
  out.id = sample.id;
  out.label = sample.label;
  out.gray = Image(target_side, target_side, 1, 0);
  out.mask = Mask(target_side, target_side, 1, 0);
  if (sample.rgb) out.rgb = Image(target_side, target_side, 3, 0);

  auto bilinear = [](const Image& img, double fx, double fy, int c) {
    fx = std::clamp(fx, 0.0, img.width - 1.0);
    fy = std::clamp(fy, 0.0, img.height - 1.0);
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double ax = fx - x0, ay = fy - y0;
    const double top = img.at(x0, y0, c) * (1 - ax) + img.at(x1, y0, c) * ax;
    const double bot = img.at(x0, y1, c) * (1 - ax) + img.at(x1, y1, c) * ax;
    return static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - ay) + bot * ay), 0L, 255L));
  };

  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      const double fx = (x + 0.5) / scale - 0.5, fy = (y + 0.5) / scale - 0.5;
      const int nx = std::clamp(static_cast<int>(std::floor((x + 0.5) / scale)), 0, w - 1);
      const int ny = std::clamp(static_cast<int>(std::floor((y + 0.5) / scale)), 0, h - 1);
      const int ox = x + off_x, oy = y + off_y;
      out.mask.at(ox, oy) = sample.mask.at(nx, ny) != 0 ? 255 : 0;
      out.gray.at(ox, oy) = bilinear(sample.gray, fx, fy, 0);
      if (sample.rgb)
        for (int c = 0; c < 3; ++c) out.rgb->at(ox, oy, c) = bilinear(*sample.rgb, fx, fy, c);
    }
  }
  require(std::any_of(out.mask.data.begin(), out.mask.data.end(), [](std::uint8_t v) { return v != 0; }),
          ErrorCode::EmptyRegion, "sample " + sample.id + ": region vanished after rescaling");
  return out;
}

Image quantize_gray(const Image& gray, int levels) {
  require(levels >= 2 && levels <= 256, ErrorCode::InvalidArgument, "quantization levels must lie in [2, 256]");
  require(gray.channels == 1, ErrorCode::InvalidArgument, "quantize_gray expects a single-channel raster");
  Image out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>((static_cast<int>(gray.data[i]) * levels) / 256);
  return out;
}

Standardizer::Standardizer(std::vector<std::string> names, std::vector<double> means, std::vector<double> stds)
    : names_(std::move(names)), means_(std::move(means)), stds_(std::move(stds)) {
  require(names_.size() == means_.size() && means_.size() == stds_.size(), ErrorCode::InvalidArgument,
          "standardizer vectors differ in length");
  for (double s : stds_) require(s > 0.0 && std::isfinite(s), ErrorCode::InvalidArgument, "standardizer std must be positive");
}

Standardizer Standardizer::fit(const LabeledDataset& train) {
  require(train.size() > 0, ErrorCode::EmptyData, "cannot fit a standardizer on an empty dataset");
  const std::size_t d = train.dim();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  const auto n = static_cast<double>(train.size());
  for (std::size_t r = 0; r < train.size(); ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += train.features(r, j);
  for (auto& m : mean) m /= n;
  for (std::size_t r = 0; r < train.size(); ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = train.features(r, j) - mean[j];
      sd[j] += dv * dv;
    }
  for (auto& s : sd) {
    s = std::sqrt(s / n);
    if (!(s >= 1e-12)) s = 1.0;  // constant slot maps to zero
  }
  return Standardizer(train.feature_names, std::move(mean), std::move(sd));
}

std::vector<double> Standardizer::apply(std::span<const double> values) const {
  require(values.size() == means_.size(), ErrorCode::Schema, "vector width differs from standardizer width");
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) out[j] = (values[j] - means_[j]) / stds_[j];
  return out;
}

FeatureVector Standardizer::apply(const FeatureVector& v) const {
  require(v.schema_hash == schema_hash(), ErrorCode::Schema,
          "feature schema " + v.schema_hash + " does not match standardizer schema " + schema_hash());
  return {apply(std::span<const double>(v.values)), v.schema_hash};
}

LabeledDataset Standardizer::apply(const LabeledDataset& ds) const {
  require(ds.schema_hash() == schema_hash(), ErrorCode::Schema,
          "dataset schema " + ds.schema_hash() + " does not match standardizer schema " + schema_hash());
  LabeledDataset out = ds;
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto row = out.features.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - means_[j]) / stds_[j];
  }
  out.standardized = true;
  return out;
}

std::vector<double> Standardizer::invert(std::span<const double> values) const {
  require(values.size() == means_.size(), ErrorCode::Schema, "vector width differs from standardizer width");
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) out[j] = values[j] * stds_[j] + means_[j];
  return out;
}

std::string Standardizer::fingerprint() const {
  std::vector<std::string> parts = names_;
  char buf[64];
  for (std::size_t j = 0; j < means_.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%a:%a", means_[j], stds_[j]);
    parts.emplace_back(buf);
  }
  return schema_digest(parts);
}

}  // namespace rbc
