#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rbc/io.hpp"

namespace rbc {

// Toy smear cells: pale-centred discs (circular), bent ellipses (elongated)
// and lobed or spiculated blobs (other), on a light background with sensor
// noise. Intended for end-to-end runs without the original image set.
struct SynthOptions {
  std::size_t n_cells = 600;
  std::uint64_t seed = 0;
  int canvas = 80;                                    // square frame side in pixels
  std::array<double, 3> proportions = {1.0, 1.0, 1.0};  // relative class frequencies
  double noise = 10.0;                                // per-pixel intensity std
};

// Class counts follow the proportions by largest remainder; cells are
// interleaved by class and named `syn_<class>_<nnnn>`.
std::vector<CellSample> generate_cells(const SynthOptions& opts);

// Writes `<dir>/<class>/<id>.png` plus `_mask.png` siblings and
// `<dir>/manifest.csv`; returns the manifest entries.
std::vector<ManifestEntry> write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace rbc
