#include "melad/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "melad/image.hpp"

namespace melad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Label label_from_string(const std::string& s) {
  const auto l = lower(trim(s));
  if (l == "benign") return Label::benign;
  if (l == "malignant") return Label::malignant;
  throw DataError("label must be benign or malignant, got \"" + s + "\"");
}

}  // namespace

void DatasetManifest::add(SampleRecord record) {
  if (record.image_path.empty()) throw DataError("manifest record has an empty image path");
  for (const auto& r : records_) {
    if (r.image_path == record.image_path && r.source == record.source &&
        r.augment_seed == record.augment_seed) {
      throw DataError("duplicate manifest record (" + record.image_path + ", " + record.source +
                      ")");
    }
  }
  (record.label == Label::benign ? counts_.benign : counts_.malignant) += 1;
  records_.push_back(std::move(record));
}

AliasTable AliasTable::defaults() {
  AliasTable t;
  for (const char* s : {"benign", "0", "nevus"}) t.set(s, Label::benign);
  for (const char* s : {"malignant", "1", "melanoma"}) t.set(s, Label::malignant);
  return t;
}

AliasTable AliasTable::from_json(const std::string& text) {
  AliasTable t = defaults();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("alias table: ") + e.what());
  }
  if (!j.is_object()) throw DataError("alias table must be a JSON object");
  for (const auto& [raw, value] : j.items()) {
    if (!value.is_string()) throw DataError("alias \"" + raw + "\" must map to a string");
    t.set(raw, label_from_string(value.get<std::string>()));
  }
  return t;
}

AliasTable AliasTable::load(const fs::path& path) {
  return from_json(read_text(path, "alias table"));
}

void AliasTable::set(const std::string& raw, Label label) { map_[lower(trim(raw))] = label; }

std::optional<Label> AliasTable::lookup(const std::string& raw) const {
  const auto it = map_.find(lower(trim(raw)));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const fs::path& path) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == name) return i;
  throw DataError(path.string() + ": missing column \"" + name + "\"");
}

std::string resolve_image(const fs::path& root, const std::string& id) {
  const fs::path p = root / id;
  if (has_image_extension(p)) return p.string();
  for (const char* ext : {".jpg", ".jpeg", ".png"}) {
    fs::path candidate = p;
    candidate += ext;
    if (fs::exists(candidate)) return candidate.string();
  }
  fs::path fallback = p;
  fallback += ".jpg";
  return fallback.string();
}

}  // namespace

IngestResult ingest_csv(const fs::path& csv_path, const fs::path& image_root,
                        const CsvIngestOptions& options) {
  const auto rows = parse_csv(read_text(csv_path, "CSV"));
  if (rows.empty()) throw DataError(csv_path.string() + ": missing header row");
  const auto& header = rows.front();
  const std::size_t ic = column_index(header, options.image_column, csv_path);
  const std::size_t lc = column_index(header, options.label_column, csv_path);

  IngestResult res;
  res.manifest.set_provenance({options.source});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++res.input_rows;
    const std::string image = ic < row.size() ? trim(row[ic]) : "";
    const std::string raw = lc < row.size() ? row[lc] : "";
    if (image.empty()) {
      res.rejects.push_back({r + 1, image, raw, "empty image identifier"});
      continue;
    }
    const auto label = options.aliases.lookup(raw);
    if (!label) {
      res.rejects.push_back({r + 1, image, raw, "unmapped label"});
      continue;
    }
    try {
      res.manifest.add({resolve_image(image_root, image), *label, options.source, std::nullopt});
    } catch (const DataError& e) {
      res.rejects.push_back({r + 1, image, raw, e.what()});
    }
  }
  if (res.manifest.empty()) throw DataError(csv_path.string() + ": zero valid rows");
  return res;
}

IngestResult ingest_folders(const fs::path& root, const std::string& source) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  IngestResult res;
  res.manifest.set_provenance({source});

  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(root)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());

  std::vector<std::pair<fs::path, Label>> class_dirs;
  for (const auto& p : entries) {
    const std::string name = lower(p.filename().string());
    if (fs::is_directory(p) && (name == "benign" || name == "malignant")) {
      class_dirs.push_back({p, name == "benign" ? Label::benign : Label::malignant});
    } else {
      res.warnings.push_back("ignoring " + p.string());
    }
  }
  if (class_dirs.empty()) {
    throw DataError(root.string() + ": neither benign/ nor malignant/ subdirectory present");
  }
  for (const auto& [dir, label] : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && has_image_extension(e.path())) {
        files.push_back(e.path());
      } else {
        res.warnings.push_back("ignoring " + e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) res.warnings.push_back(dir.string() + " holds no images");
    for (const auto& f : files) {
      ++res.input_rows;
      res.manifest.add({f.string(), label, source, std::nullopt});
    }
  }
  for (const Label l : {Label::benign, Label::malignant}) {
    const bool present = std::any_of(class_dirs.begin(), class_dirs.end(),
                                     [&](const auto& d) { return d.second == l; });
    if (!present) res.warnings.push_back("no " + to_string(l) + "/ subdirectory");
  }
  if (res.manifest.empty()) throw DataError(root.string() + ": no image files found");
  return res;
}

std::vector<std::string> parse_combination(const std::string& combo) {
  std::vector<std::string> codes;
  std::stringstream ss(combo);
  std::string code;
  while (std::getline(ss, code, '+')) {
    code = trim(code);
    if (code.empty()) throw DataError("empty code in combination \"" + combo + "\"");
    codes.push_back(code);
  }
  if (codes.empty()) throw DataError("empty combination");
  return codes;
}

DatasetManifest combine(const std::map<std::string, DatasetManifest>& manifests,
                        const std::vector<std::string>& combo) {
  DatasetManifest out;
  for (const auto& code : combo) {
    const auto it = manifests.find(code);
    if (it == manifests.end()) throw DataError("unknown dataset code \"" + code + "\"");
    for (const auto& r : it->second.records()) out.add(r);
  }
  out.set_provenance(combo);
  return out;
}

std::map<std::string, std::vector<std::string>> builtin_combination_presets() {
  static const char* const kCombos[] = {
      "a+b+c+d+e",   "a+b+c+d+e+f+g", "a+b+c+d+e+f+h",         "a+b+c+d+e+g",
      "a+b+c+d+e+h+i", "a+b+c+d+h+i", "a+b+c+h+g",             "a+f",
      "a+f+h",       "c",             "d",                     "e",
      "a+b+c+d+i+j", "a+b+c+d+e+g+f+i+j+k",
  };
  std::map<std::string, std::vector<std::string>> out;
  for (const char* c : kCombos) out[c] = parse_combination(c);
  return out;
}

std::map<std::string, std::vector<std::string>> load_combination_presets(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path, "presets file"));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(path.string() + ": presets must be a JSON object");
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [name, codes] : j.items()) {
    if (!codes.is_array()) throw DataError(path.string() + ": preset \"" + name + "\" is not a list");
    std::vector<std::string> v;
    for (const auto& c : codes) v.push_back(c.get<std::string>());
    out[name] = std::move(v);
  }
  return out;
}

const std::map<std::string, std::string>& source_datasets() {
  static const std::map<std::string, std::string> kSources{
      {"a", "ISIC2016"},  {"b", "ISIC2017"},         {"c", "ISIC2018"}, {"d", "ISIC2019"},
      {"e", "ISIC2020"},  {"f", "7-point criteria"}, {"g", "PH2"},      {"h", "PAD-UFES-20"},
      {"i", "MED-NODE"},  {"j", "Kaggle"},           {"k", "HAM10000"},
  };
  return kSources;
}

std::string manifest_to_csv(const DatasetManifest& manifest) {
  const bool seeds = std::any_of(manifest.records().begin(), manifest.records().end(),
                                 [](const SampleRecord& r) { return r.augment_seed.has_value(); });
  std::string out = seeds ? "image_path,label,source,augment_seed\n" : "image_path,label,source\n";
  for (const auto& r : manifest.records()) {
    out += csv_field(r.image_path) + ',' + to_string(r.label) + ',' + csv_field(r.source);
    if (seeds) {
      out += ',';
      if (r.augment_seed) out += std::to_string(*r.augment_seed);
    }
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("manifest has no header");
  const auto& h = rows.front();
  const bool seeds = h.size() == 4 && h[3] == "augment_seed";
  if (h.size() < 3 || h[0] != "image_path" || h[1] != "label" || h[2] != "source" ||
      (h.size() > 3 && !seeds)) {
    throw DataError("manifest header must be image_path,label,source[,augment_seed]");
  }
  DatasetManifest m;
  std::vector<std::string> provenance;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != h.size()) {
      throw DataError("manifest line " + std::to_string(i + 1) + " has " +
                      std::to_string(row.size()) + " fields, expected " + std::to_string(h.size()));
    }
    SampleRecord r{row[0], label_from_string(row[1]), row[2], std::nullopt};
    if (seeds && !row[3].empty()) {
      try {
        r.augment_seed = std::stoull(row[3]);
      } catch (const std::exception&) {
        throw DataError("manifest line " + std::to_string(i + 1) + ": bad augment_seed");
      }
    }
    if (std::find(provenance.begin(), provenance.end(), r.source) == provenance.end()) {
      provenance.push_back(r.source);
    }
    m.add(std::move(r));
  }
  m.set_provenance(std::move(provenance));
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest_to_csv(manifest);
}

DatasetManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_csv(read_text(path, "manifest"));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.starts_with("cannot open")) throw;
    throw DataError(path.string() + ": " + msg);
  }
}

}  // namespace melad
