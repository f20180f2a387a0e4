#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rbc/features.hpp"
#include "rbc/types.hpp"

namespace rbc {

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a
// half-written file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_escape(const std::string& field);

// Shortest text that parses back to the same double.
std::string format_double(double v);

// Feature table: `id`, feature columns, optional trailing `label` (empty
// cells mean unlabeled).
LabeledDataset parse_feature_csv(const std::string& text);
std::string to_feature_csv(const LabeledDataset& ds);
LabeledDataset read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const LabeledDataset& ds, const std::filesystem::path& path);

// ----------------------------------------------------------------- images --

// 8-bit gray or RGB. Palette, 16-bit and alpha inputs are converted.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// ------------------------------------------------------------- manifests --

struct ManifestEntry {
  std::string id;
  std::optional<int> label;
  std::filesystem::path image;
  std::filesystem::path mask;
};

// CSV with header `id,label,path[,mask]`. Relative paths resolve against the
// manifest's directory. Without a mask column the mask is `<stem>_mask.png`
// beside the image.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

// `<root>/{circular,elongated,other}/*.png`, skipping `*_mask.png`; ids are
// `<class>/<stem>`, sorted.
std::vector<ManifestEntry> scan_directory(const std::filesystem::path& root);

// Either a manifest file or a class-directory root.
std::vector<ManifestEntry> load_entries(const std::filesystem::path& manifest_or_dir);

CellSample load_cell(const ManifestEntry& entry);

// Extracts every entry in parallel; rows keep the entry order. Failures name
// the offending cell.
LabeledDataset extract_dataset(const std::vector<ManifestEntry>& entries, const ExtractionOptions& opts = {});
LabeledDataset extract_dataset(const std::vector<CellSample>& cells, const ExtractionOptions& opts = {});

}  // namespace rbc
