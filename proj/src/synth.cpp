#include "rbc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rbc/parallel.hpp"
#include "rbc/random.hpp"

namespace rbc {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Shape {
  int label = 0;
  double cx = 0.0, cy = 0.0;
  double angle = 0.0;
  // Radial outline r(theta) = radius * (1 + sum amp_h cos(h theta + phase_h)).
  double radius = 0.0;
  std::vector<std::array<double, 3>> harmonics;  // {h, amp, phase}
  // Bent ellipse for elongated cells.
  double a = 0.0, b = 0.0, bend = 0.0;
  // Intensity model.
  double body = 0.0;
  double pallor = 0.0;  // central brightening of discs
  std::vector<std::array<double, 3>> spots;  // {u, v, depth}
};

Shape draw_shape(int label, int canvas, Rng& rng) {
  Shape s;
  s.label = label;
  const double c = canvas / 2.0;
  s.cx = c + rng.uniform(-3.0, 3.0);
  s.cy = c + rng.uniform(-3.0, 3.0);
  s.angle = rng.uniform(0.0, kPi);
  const double scale = canvas / 80.0;
  switch (label) {
    case 0:
      s.radius = rng.uniform(17.0, 24.0) * scale;
      s.harmonics.push_back({2.0, rng.uniform(0.0, 0.03), rng.uniform(0.0, 2 * kPi)});
      s.body = rng.uniform(120.0, 140.0);
      s.pallor = rng.uniform(10.0, 60.0);
      break;
    case 1:
      s.a = rng.uniform(24.0, 32.0) * scale;
      s.b = s.a / rng.uniform(1.5, 3.8);
      s.bend = rng.uniform(0.0, 0.35);
      s.body = rng.uniform(105.0, 125.0);
      break;
    default:
      s.radius = rng.uniform(16.0, 23.0) * scale;
      if (rng.uniform() < 0.5) {
        // Lobed cell: a few strong low-order harmonics.
        for (int h = 2; h <= 4; ++h) s.harmonics.push_back({double(h), rng.uniform(0.02, 0.12), rng.uniform(0.0, 2 * kPi)});
      } else {
        // Spiculated cell: one high-order ripple.
        s.harmonics.push_back({std::floor(rng.uniform(7.0, 12.0)), rng.uniform(0.03, 0.12), rng.uniform(0.0, 2 * kPi)});
        s.harmonics.push_back({2.0, rng.uniform(0.0, 0.05), rng.uniform(0.0, 2 * kPi)});
      }
      s.body = rng.uniform(115.0, 140.0);
      if (rng.uniform() < 0.4) s.pallor = rng.uniform(5.0, 30.0);
      for (int k = 0, n = static_cast<int>(rng.below(4)); k < n; ++k)
        s.spots.push_back({rng.uniform(-0.5, 0.5) * s.radius, rng.uniform(-0.5, 0.5) * s.radius, rng.uniform(20.0, 40.0)});
      break;
  }
  return s;
}

// Returns the normalized interior coordinate (< 1 inside) and fills the
// rotated local coordinates.
double interior(const Shape& s, double x, double y, double& u, double& v) {
  const double dx = x - s.cx, dy = y - s.cy;
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  u = ca * dx + sa * dy;
  v = -sa * dx + ca * dy;
  if (s.label == 1) {
    const double vb = v - s.bend * u * u / s.a;
    return std::sqrt((u / s.a) * (u / s.a) + (vb / s.b) * (vb / s.b));
  }
  const double rho = std::hypot(u, v);
  const double theta = std::atan2(v, u);
  double r = 1.0;
  for (const auto& h : s.harmonics) r += h[1] * std::cos(h[0] * theta + h[2]);
  return rho / (s.radius * r);
}

CellSample render(const Shape& s, const std::string& id, int canvas, double noise, Rng& rng) {
  Image rgb(canvas, canvas, 3);
  Mask mask(canvas, canvas);
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      double u = 0.0, v = 0.0;
      const double t = interior(s, x, y, u, v);
      double value = 215.0;
      if (t <= 1.0) {
        mask.at(x, y) = 255;
        value = s.body + 12.0 * t;  // brighter toward the rim
        if (s.pallor > 0.0) value += s.pallor * std::exp(-(t * t) / (0.45 * 0.45));
        for (const auto& sp : s.spots) {
          const double d2 = (u - sp[0]) * (u - sp[0]) + (v - sp[1]) * (v - sp[1]);
          value -= sp[2] * std::exp(-d2 / 9.0);
        }
      }
      value += noise * rng.normal();
      const double r = std::clamp(value + 35.0, 0.0, 255.0);
      const double g = std::clamp(value * 0.72, 0.0, 255.0);
      const double b = std::clamp(value * 0.80, 0.0, 255.0);
      rgb.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(r));
      rgb.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(g));
      rgb.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(b));
    }
  }
  return make_sample(id, rgb, std::move(mask), s.label);
}

std::vector<int> class_sequence(const SynthOptions& opts) {
  const double total = opts.proportions[0] + opts.proportions[1] + opts.proportions[2];
  require(total > 0.0 && std::all_of(opts.proportions.begin(), opts.proportions.end(), [](double p) { return p >= 0.0; }),
          ErrorCode::InvalidArgument, "class proportions must be non-negative and not all zero");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int c = 0; c < 3; ++c) {
    const double exact = opts.n_cells * opts.proportions[c] / total;
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    rem[c] = exact - counts[c];
    assigned += counts[c];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < opts.n_cells; ++i, ++assigned) ++counts[order[i % 3]];

  std::vector<int> seq;
  while (seq.size() < opts.n_cells)
    for (int c = 0; c < 3; ++c)
      if (counts[c] > 0) {
        seq.push_back(c);
        --counts[c];
      }
  return seq;
}

}  // namespace

std::vector<CellSample> generate_cells(const SynthOptions& opts) {
  require(opts.n_cells > 0, ErrorCode::InvalidArgument, "synthetic dataset needs at least one cell");
  require(opts.canvas >= 32, ErrorCode::InvalidArgument, "synthetic canvas must be at least 32 px");
  require(opts.noise >= 0.0, ErrorCode::InvalidArgument, "noise must be non-negative");
  const auto seq = class_sequence(opts);
  std::vector<CellSample> cells(seq.size());
  std::array<int, 3> seen{};
  std::vector<std::string> ids(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "syn_%s_%04d", std::string(class_name(seq[i])).c_str(), seen[seq[i]]++);
    ids[i] = buf;
  }
  parallel_for(seq.size(), [&](std::size_t i) {
    Rng rng(derive_seed(opts.seed, i));
    const Shape shape = draw_shape(seq[i], opts.canvas, rng);
    cells[i] = render(shape, ids[i], opts.canvas, opts.noise, rng);
  });
  return cells;
}

std::vector<ManifestEntry> write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& opts) {
  const auto cells = generate_cells(opts);
  std::vector<ManifestEntry> entries(cells.size());
  for (int c = 0; c < kNumClasses; ++c) std::filesystem::create_directories(dir / std::string(class_name(c)));
  parallel_for(cells.size(), [&](std::size_t i) {
    const auto& cell = cells[i];
    const auto folder = dir / std::string(class_name(*cell.label));
    ManifestEntry e;
    e.id = cell.id;
    e.label = cell.label;
    e.image = folder / (cell.id + ".png");
    e.mask = folder / (cell.id + "_mask.png");
    write_png(e.image, *cell.rgb);
    write_png(e.mask, cell.mask);
    entries[i] = std::move(e);
  });
  write_manifest(entries, dir / "manifest.csv");
  return entries;
}

}  // namespace rbc
