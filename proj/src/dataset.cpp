#include "alids/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "alids/error.hpp"
#include "alids/random.hpp"

namespace alids::dataset {

using nlohmann::json;

namespace {

std::string_view kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::ignored: return "ignored";
  }
  return "ignored";
}

ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "ignored") return ColumnKind::ignored;
  throw DatasetError("schema: unknown column kind '" + s + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view token, const std::string& column, std::size_t row) {
  const auto t = trim(token);
  double value = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (t.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw DatasetError("non-numeric value '" + std::string(token) + "' in numeric column '" +
                       column + "' (record " + std::to_string(row) + ")");
  }
  return value;
}

// Splits RFC-4180 text into records. Quoted fields may span lines.
class CsvReader {
 public:
  explicit CsvReader(std::string_view text) : text_(text) {}

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (pos_ >= text_.size()) return false;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (quoted) {
        if (c == '"') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            field.push_back('"');
            pos_ += 2;
            continue;
          }
          quoted = false;
          ++pos_;
          continue;
        }
        field.push_back(c);
        ++pos_;
        continue;
      }
      if (c == '"' && !field_started) {
        quoted = true;
        field_started = true;
        ++pos_;
        continue;
      }
      if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_started = false;
        ++pos_;
        continue;
      }
      if (c == '\r' || c == '\n') {
        ++pos_;
        if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
        fields.push_back(std::move(field));
        return true;
      }
      field.push_back(c);
      field_started = true;
      ++pos_;
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureSchema

void FeatureSchema::validate() const {
  if (label_column.empty()) throw DatasetError("schema: label_column is required");
  std::set<std::string> names;
  std::size_t label_hits = 0;
  std::size_t feature_columns = 0;
  for (const auto& c : columns) {
    if (!names.insert(c.name).second) throw DatasetError("schema: duplicate column '" + c.name + "'");
    if (c.name == label_column) {
      ++label_hits;
    } else if (c.kind != ColumnKind::ignored) {
      ++feature_columns;
    }
  }
  if (label_hits != 1) throw DatasetError("schema: unknown label column '" + label_column + "'");
  if (feature_columns == 0) throw DatasetError("schema: no feature columns");
}

std::size_t FeatureSchema::label_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == label_column) return i;
  }
  throw DatasetError("schema: unknown label column '" + label_column + "'");
}

std::string FeatureSchema::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

FeatureSchema FeatureSchema::from_json(const json& j) {
  FeatureSchema s;
  try {
    for (const auto& c : j.at("columns")) {
      s.columns.push_back({c.at("name").get<std::string>(), parse_kind(c.at("kind").get<std::string>())});
    }
    s.label_column = j.at("label_column").get<std::string>();
    s.normal_label = j.at("normal_label").get<std::string>();
    s.has_header = j.value("has_header", false);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

json FeatureSchema::to_json() const {
  json cols = json::array();
  for (const auto& c : columns) cols.push_back({{"name", c.name}, {"kind", kind_name(c.kind)}});
  return {{"columns", cols},
          {"label_column", label_column},
          {"normal_label", normal_label},
          {"has_header", has_header}};
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open schema file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const DatasetError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// EncodingMap

std::vector<std::string> EncodingMap::feature_names() const {
  std::vector<std::string> names;
  names.reserve(feature_count);
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::numeric) {
      names.push_back(c.name);
    } else {
      for (const auto& cat : c.categories) names.push_back(c.name + "=" + cat);
    }
  }
  return names;
}

json EncodingMap::to_json() const {
  json cols = json::array();
  for (const auto& c : columns) {
    json e = {{"name", c.name}, {"kind", kind_name(c.kind)}};
    if (c.kind == ColumnKind::numeric) {
      e["min"] = c.min;
      e["max"] = c.max;
    } else {
      e["categories"] = c.categories;
    }
    cols.push_back(std::move(e));
  }
  return {{"columns", cols}, {"feature_count", feature_count}};
}

EncodingMap EncodingMap::from_json(const json& j) {
  EncodingMap map;
  for (const auto& e : j.at("columns")) {
    ColumnEncoding c;
    c.name = e.at("name").get<std::string>();
    c.kind = parse_kind(e.at("kind").get<std::string>());
    if (c.kind == ColumnKind::numeric) {
      c.min = e.at("min").get<double>();
      c.max = e.at("max").get<double>();
      c.width = 1;
    } else if (c.kind == ColumnKind::categorical) {
      c.categories = e.at("categories").get<std::vector<std::string>>();
      if (!std::is_sorted(c.categories.begin(), c.categories.end())) {
        throw DatasetError("encoding map: categories of '" + c.name + "' are not sorted");
      }
      c.width = c.categories.size();
    } else {
      throw DatasetError("encoding map: ignored column '" + c.name + "' cannot be encoded");
    }
    c.offset = map.feature_count;
    map.feature_count += c.width;
    map.columns.push_back(std::move(c));
  }
  if (j.at("feature_count").get<std::size_t>() != map.feature_count) {
    throw DatasetError("encoding map: feature_count does not match columns");
  }
  return map;
}

std::vector<DecodedFeature> decode(const EncodingMap& map, std::span<const double> features) {
  if (features.size() != map.feature_count) {
    throw DatasetError("decode: expected " + std::to_string(map.feature_count) + " features, got " +
                       std::to_string(features.size()));
  }
  std::vector<DecodedFeature> out;
  out.reserve(map.columns.size());
  for (const auto& c : map.columns) {
    DecodedFeature f;
    f.name = c.name;
    f.normalized.assign(features.begin() + static_cast<std::ptrdiff_t>(c.offset),
                        features.begin() + static_cast<std::ptrdiff_t>(c.offset + c.width));
    if (c.kind == ColumnKind::numeric) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.10g", c.min + f.normalized[0] * (c.max - c.min));
      f.value = buf;
    } else {
      f.value = "<unseen>";
      for (std::size_t i = 0; i < c.width; ++i) {
        if (f.normalized[i] == 1.0) f.value = c.categories[i];
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading

std::vector<RawRecord> parse_csv(std::string_view text, const FeatureSchema& schema,
                                 const LoadOptions& options, std::string_view source) {
  schema.validate();
  const std::size_t arity = schema.columns.size();
  const std::size_t label_at = schema.label_index();
  const bool header = options.has_header.value_or(schema.has_header);

  std::vector<RawRecord> records;
  CsvReader reader(text);
  std::vector<std::string> fields;
  std::size_t row = 0;
  while (reader.next(fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (header && row == 1) continue;
    if (fields.size() != arity) {
      throw DatasetError(std::string(source) + ": record " + std::to_string(row) + " has " +
                         std::to_string(fields.size()) + " fields, expected " + std::to_string(arity));
    }
    RawRecord r;
    r.label = fields[label_at];
    r.values = std::move(fields);
    records.push_back(std::move(r));
    fields = {};
  }
  return records;
}

std::vector<RawRecord> load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                                const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, options, path.string());
}

// ---------------------------------------------------------------------------
// Encoding

EncodingMap fit_encoding(std::span<const RawRecord> records, const FeatureSchema& schema) {
  schema.validate();
  if (records.empty()) throw DatasetError("fit_encoding: no records");
  const std::size_t label_at = schema.label_index();

  EncodingMap map;
  for (std::size_t col = 0; col < schema.columns.size(); ++col) {
    const auto& sc = schema.columns[col];
    if (col == label_at || sc.kind == ColumnKind::ignored) continue;
    ColumnEncoding c;
    c.name = sc.name;
    c.kind = sc.kind;
    if (sc.kind == ColumnKind::numeric) {
      c.min = std::numeric_limits<double>::infinity();
      c.max = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < records.size(); ++r) {
        const double v = parse_number(records[r].values[col], sc.name, r + 1);
        c.min = std::min(c.min, v);
        c.max = std::max(c.max, v);
      }
      c.width = 1;
    } else {
      std::set<std::string> seen;
      for (const auto& r : records) seen.insert(r.values[col]);
      c.categories.assign(seen.begin(), seen.end());
      c.width = c.categories.size();
    }
    c.offset = map.feature_count;
    map.feature_count += c.width;
    map.columns.push_back(std::move(c));
  }
  return map;
}

EncodedDataset encode(std::span<const RawRecord> records, const EncodingMap& map,
                      const FeatureSchema& schema) {
  schema.validate();
  std::vector<std::size_t> source_column;
  for (const auto& c : map.columns) {
    const auto it = std::find_if(schema.columns.begin(), schema.columns.end(),
                                 [&](const Column& sc) { return sc.name == c.name; });
    if (it == schema.columns.end() || it->kind != c.kind || it->name == schema.label_column) {
      throw DatasetError("encode: encoding map column '" + c.name + "' is not compatible with the schema");
    }
    source_column.push_back(static_cast<std::size_t>(it - schema.columns.begin()));
  }

  EncodedDataset out;
  out.encoding_map = map;
  out.provenance.schema_hash = schema.hash();
  out.instances.reserve(records.size());
  out.raw_labels.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.values.size() != schema.columns.size()) {
      throw DatasetError("encode: record " + std::to_string(r + 1) + " has wrong arity");
    }
    EncodedInstance inst;
    inst.id = r;
    inst.features.assign(map.feature_count, 0.0);
    for (std::size_t k = 0; k < map.columns.size(); ++k) {
      const auto& c = map.columns[k];
      const auto& token = rec.values[source_column[k]];
      if (c.kind == ColumnKind::numeric) {
        const double v = parse_number(token, c.name, r + 1);
        double scaled = 0.0;
        if (c.max > c.min) scaled = std::clamp((v - c.min) / (c.max - c.min), 0.0, 1.0);
        inst.features[c.offset] = scaled;
      } else {
        const auto it = std::lower_bound(c.categories.begin(), c.categories.end(), token);
        if (it != c.categories.end() && *it == token) {
          inst.features[c.offset + static_cast<std::size_t>(it - c.categories.begin())] = 1.0;
        } else {
          ++out.unseen_categories;
        }
      }
    }
    out.instances.push_back(std::move(inst));
    if (rec.label.empty()) {
      out.raw_labels.emplace_back(std::nullopt);
    } else {
      out.raw_labels.emplace_back(rec.label);
    }
  }
  return out;
}

EncodedDataset binarize_labels(EncodedDataset dataset, std::string_view normal_label) {
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    const auto& raw = i < dataset.raw_labels.size() ? dataset.raw_labels[i] : std::nullopt;
    if (!raw) missing.push_back(dataset.instances[i].id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) {
      if (i) ids += ",";
      ids += std::to_string(missing[i]);
    }
    if (missing.size() > 20) ids += ",...";
    throw DatasetError("binarize_labels: " + std::to_string(missing.size()) + " instance(s) without label: " + ids);
  }
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    dataset.instances[i].label = *dataset.raw_labels[i] == normal_label ? 0 : 1;
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Splitting

EncodedDataset subset(const EncodedDataset& dataset, std::span<const std::size_t> ids) {
  std::unordered_map<std::size_t, std::size_t> position;
  position.reserve(dataset.instances.size());
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) position.emplace(dataset.instances[i].id, i);

  EncodedDataset out;
  out.encoding_map = dataset.encoding_map;
  out.provenance = dataset.provenance;
  out.instances.reserve(ids.size());
  out.raw_labels.reserve(ids.size());
  for (const auto id : ids) {
    const auto it = position.find(id);
    if (it == position.end()) throw DatasetError("subset: unknown id " + std::to_string(id));
    out.instances.push_back(dataset.instances[it->second]);
    out.raw_labels.push_back(it->second < dataset.raw_labels.size() ? dataset.raw_labels[it->second]
                                                                    : std::nullopt);
  }
  return out;
}

SplitResult split(const EncodedDataset& dataset, double train_fraction, std::uint64_t seed,
                  const SplitOptions& options) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must lie in (0,1)");
  }
  if (dataset.empty()) throw ConfigError("split: dataset is empty");

  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
  Rng rng(seed);

  auto take = [&](std::vector<std::size_t> ids) {
    rng.shuffle(std::span<std::size_t>(ids));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    train_ids.insert(train_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_ids.insert(test_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  };

  if (options.stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (const auto& inst : dataset.instances) {
      if (!inst.label) throw ConfigError("split: stratified split needs binarized labels");
      by_class[*inst.label].push_back(inst.id);
    }
    for (auto& [label, ids] : by_class) take(std::move(ids));
  } else {
    std::vector<std::size_t> ids;
    ids.reserve(dataset.size());
    for (const auto& inst : dataset.instances) ids.push_back(inst.id);
    take(std::move(ids));
  }

  SplitResult result;
  result.train = subset(dataset, train_ids);
  result.test = subset(dataset, test_ids);
  result.warning = train_ids.empty() || test_ids.empty();
  return result;
}

// ---------------------------------------------------------------------------
// Snapshots

json snapshot_to_json(const EncodedDataset& dataset, bool include_matrix) {
  json j = {{"format", "alids.encoded/1"},
            {"encoding_map", dataset.encoding_map.to_json()},
            {"provenance", {{"source", dataset.provenance.source}, {"schema_hash", dataset.provenance.schema_hash}}},
            {"unseen_categories", dataset.unseen_categories}};
  if (include_matrix) {
    json rows = json::array();
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
      const auto& inst = dataset.instances[i];
      json row = {{"id", inst.id}, {"features", inst.features}};
      row["label"] = inst.label ? json(*inst.label) : json(nullptr);
      const auto& raw = i < dataset.raw_labels.size() ? dataset.raw_labels[i] : std::nullopt;
      row["raw_label"] = raw ? json(*raw) : json(nullptr);
      rows.push_back(std::move(row));
    }
    j["instances"] = std::move(rows);
  }
  return j;
}

EncodedDataset snapshot_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "alids.encoded/1") {
      throw DatasetError("snapshot: unsupported format '" + j.at("format").get<std::string>() + "'");
    }
    EncodedDataset d;
    d.encoding_map = EncodingMap::from_json(j.at("encoding_map"));
    d.provenance.source = j.at("provenance").at("source").get<std::string>();
    d.provenance.schema_hash = j.at("provenance").at("schema_hash").get<std::string>();
    d.unseen_categories = j.value("unseen_categories", std::size_t{0});
    if (j.contains("instances")) {
      for (const auto& row : j.at("instances")) {
        EncodedInstance inst;
        inst.id = row.at("id").get<std::size_t>();
        inst.features = row.at("features").get<std::vector<double>>();
        if (inst.features.size() != d.encoding_map.feature_count) {
          throw DatasetError("snapshot: instance " + std::to_string(inst.id) + " has wrong feature count");
        }
        if (!row.at("label").is_null()) {
          const int label = row.at("label").get<int>();
          if (label != 0 && label != 1) throw DatasetError("snapshot: label must be 0 or 1");
          inst.label = label;
        }
        const auto& raw = row.value("raw_label", json(nullptr));
        d.raw_labels.push_back(raw.is_null() ? std::nullopt : std::optional<std::string>(raw.get<std::string>()));
        d.instances.push_back(std::move(inst));
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("snapshot: ") + e.what());
  }
}

}  // namespace alids::dataset
