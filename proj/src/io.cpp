#include "rbc/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "rbc/parallel.hpp"

namespace fs = std::filesystem;

namespace rbc {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
    out << text;
    require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_data = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      row_has_data = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      row_has_data = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (row_has_data || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      row_has_data = false;
    } else {
      field += c;
      row_has_data = true;
    }
  }
  require(!quoted, ErrorCode::Parse, "unterminated quoted CSV field");
  if (row_has_data || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last && first != last, ErrorCode::Parse,
          "line " + std::to_string(line) + ", column '" + column + "': '" + s + "' is not a number");
  require(std::isfinite(v), ErrorCode::Parse,
          "line " + std::to_string(line) + ", column '" + column + "': non-finite value");
  return v;
}

}  // namespace

LabeledDataset parse_feature_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  require(!rows.empty(), ErrorCode::Parse, "feature table is empty");
  const auto& header = rows[0];
  require(header.size() >= 2 && header[0] == "id", ErrorCode::Parse, "feature table must start with an 'id' column");
  const bool has_label = header.back() == "label";
  const std::size_t first = 1;
  const std::size_t last = header.size() - (has_label ? 1 : 0);
  require(last > first, ErrorCode::Parse, "feature table has no feature columns");

  LabeledDataset ds;
  ds.feature_names.assign(header.begin() + first, header.begin() + last);
  ds.features = Matrix(rows.size() - 1, last - first);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    require(row.size() == header.size(), ErrorCode::Parse,
            "line " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " fields, expected " +
                std::to_string(header.size()));
    ds.ids.push_back(row[0]);
    for (std::size_t c = first; c < last; ++c)
      ds.features(r - 1, c - first) = parse_number(row[c], r + 1, header[c]);
    ds.labels.push_back(has_label && !row.back().empty() ? parse_class(row.back()) : -1);
  }
  ds.validate();
  return ds;
}

std::string to_feature_csv(const LabeledDataset& ds) {
  std::string out = "id";
  for (const auto& n : ds.feature_names) out += "," + csv_escape(n);
  out += ",label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out += csv_escape(ds.ids[r]);
    for (std::size_t c = 0; c < ds.dim(); ++c) out += "," + format_double(ds.features(r, c));
    out += ",";
    if (ds.labels[r] >= 0) out += std::string(class_name(ds.labels[r]));
    out += "\n";
  }
  return out;
}

LabeledDataset read_feature_csv(const fs::path& path) {
  try {
    return parse_feature_csv(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_feature_csv(const LabeledDataset& ds, const fs::path& path) { write_text_file(path, to_feature_csv(ds)); }

// ----------------------------------------------------------------- images --

Image read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&png, path.string().c_str()) != 0, ErrorCode::Io,
          "cannot read PNG " + path.string() + ": " + png.message);
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
  if (png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr) == 0) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + msg);
  }
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::InvalidArgument, "PNG output needs 1 or 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  require(png_image_write_to_file(&png, path.string().c_str(), 0, image.data.data(), 0, nullptr) != 0, ErrorCode::Io,
          "cannot write PNG " + path.string() + ": " + png.message);
}

// ------------------------------------------------------------- manifests --

namespace {

fs::path default_mask_path(const fs::path& image) {
  return image.parent_path() / (image.stem().string() + "_mask.png");
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto rows = parse_csv(read_text_file(path));
  require(!rows.empty(), ErrorCode::Parse, path.string() + ": manifest is empty");
  const auto& h = rows[0];
  auto col = [&](const char* name) -> int {
    const auto it = std::find(h.begin(), h.end(), name);
    return it == h.end() ? -1 : static_cast<int>(it - h.begin());
  };
  const int id_col = col("id"), label_col = col("label"), path_col = col("path"), mask_col = col("mask");
  require(id_col >= 0 && label_col >= 0 && path_col >= 0, ErrorCode::Parse,
          path.string() + ": manifest header must contain id,label,path");
  const fs::path base = path.parent_path();

  std::vector<ManifestEntry> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    require(row.size() == h.size(), ErrorCode::Parse,
            path.string() + ": line " + std::to_string(r + 1) + " has the wrong number of fields");
    ManifestEntry e;
    e.id = row[static_cast<std::size_t>(id_col)];
    require(!e.id.empty(), ErrorCode::Parse, path.string() + ": line " + std::to_string(r + 1) + " has an empty id");
    const auto& label = row[static_cast<std::size_t>(label_col)];
    if (!label.empty()) e.label = parse_class(label);
    fs::path img = row[static_cast<std::size_t>(path_col)];
    e.image = img.is_absolute() ? img : base / img;
    if (mask_col >= 0 && !row[static_cast<std::size_t>(mask_col)].empty()) {
      fs::path m = row[static_cast<std::size_t>(mask_col)];
      e.mask = m.is_absolute() ? m : base / m;
    } else {
      e.mask = default_mask_path(e.image);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string(); };
  std::string out = "id,label,path,mask\n";
  for (const auto& e : entries) {
    out += csv_escape(e.id) + "," + (e.label ? std::string(class_name(*e.label)) : "") + "," +
           csv_escape(rel(e.image)) + "," + csv_escape(rel(e.mask)) + "\n";
  }
  write_text_file(path, out);
}

std::vector<ManifestEntry> scan_directory(const fs::path& root) {
  require(fs::is_directory(root), ErrorCode::Io, root.string() + " is not a directory");
  std::vector<ManifestEntry> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const fs::path dir = root / std::string(class_name(c));
    if (!fs::is_directory(dir)) continue;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (!f.is_regular_file() || f.path().extension() != ".png") continue;
      const std::string stem = f.path().stem().string();
      if (stem.size() > 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
      ManifestEntry e;
      e.id = std::string(class_name(c)) + "/" + stem;
      e.label = c;
      e.image = f.path();
      e.mask = default_mask_path(f.path());
      out.push_back(std::move(e));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  require(!out.empty(), ErrorCode::EmptyData, root.string() + " contains no class directories with PNG cells");
  return out;
}

std::vector<ManifestEntry> load_entries(const fs::path& manifest_or_dir) {
  return fs::is_directory(manifest_or_dir) ? scan_directory(manifest_or_dir) : read_manifest(manifest_or_dir);
}

CellSample load_cell(const ManifestEntry& entry) {
  const Image pixels = read_png(entry.image);
  const Image raw_mask = read_png(entry.mask);
  require(raw_mask.width == pixels.width && raw_mask.height == pixels.height, ErrorCode::InvalidArgument,
          "cell " + entry.id + ": mask is " + std::to_string(raw_mask.width) + "x" + std::to_string(raw_mask.height) +
              " but the image is " + std::to_string(pixels.width) + "x" + std::to_string(pixels.height));
  Mask mask(pixels.width, pixels.height);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
    bool on = false;
    for (int c = 0; c < raw_mask.channels; ++c) on = on || raw_mask.data[i * raw_mask.channels + c] != 0;
    mask.data[i] = on ? 255 : 0;
  }
  return make_sample(entry.id, pixels, std::move(mask), entry.label);
}

namespace {

LabeledDataset extract_rows(std::size_t n, const std::function<CellSample(std::size_t)>& load,
                            const std::function<std::string(std::size_t)>& id_of, const ExtractionOptions& opts) {
  LabeledDataset ds;
  ds.feature_names = selected_feature_names(opts);
  ds.features = Matrix(n, ds.feature_names.size());
  ds.ids.resize(n);
  ds.labels.assign(n, -1);
  parallel_for(n, [&](std::size_t i) {
    try {
      const CellSample cell = load(i);
      const auto fv = extract_all(cell, opts);
      std::copy(fv.values.begin(), fv.values.end(), ds.features.row(i).begin());
      ds.ids[i] = cell.id;
      ds.labels[i] = cell.label.value_or(-1);
    } catch (const Error& e) {
      const std::string id = id_of(i);
      const std::string what = e.what();
      // extract_all already prefixes the sample id.
      throw Error(e.code(), what.rfind("sample " + id, 0) == 0 ? what : "cell " + id + ": " + what);
    }
  });
  return ds;
}

}  // namespace

LabeledDataset extract_dataset(const std::vector<ManifestEntry>& entries, const ExtractionOptions& opts) {
  require(!entries.empty(), ErrorCode::EmptyData, "no cells to extract");
  return extract_rows(
      entries.size(), [&](std::size_t i) { return load_cell(entries[i]); }, [&](std::size_t i) { return entries[i].id; },
      opts);
}

LabeledDataset extract_dataset(const std::vector<CellSample>& cells, const ExtractionOptions& opts) {
  require(!cells.empty(), ErrorCode::EmptyData, "no cells to extract");
  return extract_rows(
      cells.size(), [&](std::size_t i) { return cells[i]; }, [&](std::size_t i) { return cells[i].id; }, opts);
}

}  // namespace rbc
