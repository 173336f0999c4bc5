#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "melad/model.hpp"

namespace melad {

struct SampleRecord {
  std::string image_path;
  Label label = Label::benign;
  std::string source;  // short dataset code, e.g. "a"
  // Set on oversampled copies so each occurrence is augmented differently.
  std::optional<std::uint64_t> augment_seed;

  bool operator==(const SampleRecord&) const = default;
};

struct LabelCounts {
  std::size_t benign = 0;
  std::size_t malignant = 0;
  std::size_t total() const { return benign + malignant; }
  bool operator==(const LabelCounts&) const = default;
};

/// Ordered records plus the source codes they came from. A record is
/// identified by (image_path, source, augment_seed); duplicates are rejected.
class DatasetManifest {
 public:
  DatasetManifest() = default;

  void add(SampleRecord record);
  const std::vector<SampleRecord>& records() const { return records_; }
  LabelCounts counts() const { return counts_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<std::string>& provenance() const { return provenance_; }
  void set_provenance(std::vector<std::string> codes) { provenance_ = std::move(codes); }

  bool operator==(const DatasetManifest& o) const {
    return records_ == o.records_ && provenance_ == o.provenance_;
  }

 private:
  std::vector<SampleRecord> records_;
  std::vector<std::string> provenance_;
  LabelCounts counts_;
};

/// Case-insensitive raw label -> class map.
class AliasTable {
 public:
  /// benign, 0, nevus -> benign; malignant, 1, melanoma -> malignant.
  static AliasTable defaults();
  /// JSON object {"raw": "benign"|"malignant", ...}, merged over defaults().
  static AliasTable from_json(const std::string& text);
  static AliasTable load(const std::filesystem::path& path);

  void set(const std::string& raw, Label label);
  std::optional<Label> lookup(const std::string& raw) const;

 private:
  std::map<std::string, Label> map_;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string image;
  std::string raw_label;
  std::string reason;
};

struct IngestResult {
  DatasetManifest manifest;
  std::vector<RejectedRow> rejects;
  std::vector<std::string> warnings;
  std::size_t input_rows = 0;
};

struct CsvIngestOptions {
  std::string image_column = "image";
  std::string label_column = "label";
  std::string source = "x";
  AliasTable aliases = AliasTable::defaults();
};

/// One record per CSV row. Image identifiers without an extension resolve
/// to the first of .jpg/.jpeg/.png that exists under image_root (".jpg"
/// when none does). Rows whose label is not in the alias table go to
/// rejects. Throws DataError for a missing file, missing columns or zero
/// valid rows.
IngestResult ingest_csv(const std::filesystem::path& csv_path,
                        const std::filesystem::path& image_root,
                        const CsvIngestOptions& options = {});

/// Labels every PNG/JPEG under root/benign and root/malignant (directory
/// names compared case-insensitively) by its directory. Unrelated entries
/// are skipped with a warning. Throws DataError when neither class
/// directory exists or no image files are found.
IngestResult ingest_folders(const std::filesystem::path& root, const std::string& source = "x");

/// "a+b+c" -> {"a","b","c"}.
std::vector<std::string> parse_combination(const std::string& combo);

/// Concatenates the named manifests in combo order; provenance is combo.
/// Throws DataError for an unknown code.
DatasetManifest combine(const std::map<std::string, DatasetManifest>& manifests,
                        const std::vector<std::string>& combo);

/// Every dataset combination string that appears in the published result
/// tables, keyed by itself (e.g. "a+b+c+d+e+g").
std::map<std::string, std::vector<std::string>> builtin_combination_presets();
std::map<std::string, std::vector<std::string>> load_combination_presets(
    const std::filesystem::path& path);

/// Dataset behind each source code (a = ISIC2016, ..., k = HAM10000).
const std::map<std::string, std::string>& source_datasets();

// Manifest CSV: header image_path,label,source (plus augment_seed when any
// record carries one), UTF-8, LF line endings.
std::string manifest_to_csv(const DatasetManifest& manifest);
DatasetManifest manifest_from_csv(const std::string& text);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace melad
