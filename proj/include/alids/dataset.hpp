#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace alids::dataset {

enum class ColumnKind { numeric, categorical, ignored };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

/// Describes how a flow-record CSV maps onto features and the binary label.
/// The label column is one of `columns`; it never contributes features.
struct FeatureSchema {
  std::vector<Column> columns;
  std::string label_column;
  std::string normal_label;
  bool has_header = false;

  /// Throws DatasetError when the schema is unusable.
  void validate() const;
  std::size_t label_index() const;
  /// Stable FNV-1a hash of the canonical JSON form, hex encoded.
  std::string hash() const;

  static FeatureSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static FeatureSchema load(const std::filesystem::path& path);
};

struct RawRecord {
  std::vector<std::string> values;
  std::string label;
};

/// Per-column encoding learned from a record set.
struct ColumnEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::ignored;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> categories;  // sorted, categorical only
  std::size_t offset = 0;               // first feature slot
  std::size_t width = 0;                // number of feature slots
};

struct EncodingMap {
  std::vector<ColumnEncoding> columns;  // non-ignored, non-label columns in schema order
  std::size_t feature_count = 0;

  /// Human-readable name of each feature slot, e.g. "duration" or "protocol_type=tcp".
  std::vector<std::string> feature_names() const;

  nlohmann::json to_json() const;
  static EncodingMap from_json(const nlohmann::json& j);
};

/// A feature column rendered back into domain units.
struct DecodedFeature {
  std::string name;
  std::string value;               // decoded value ("tcp", "512")
  std::vector<double> normalized;  // the slots as stored
};

std::vector<DecodedFeature> decode(const EncodingMap& map, std::span<const double> features);

struct EncodedInstance {
  std::size_t id = 0;
  std::vector<double> features;
  std::optional<int> label;  // 0 = normal, 1 = attack
};

struct Provenance {
  std::string source;
  std::string schema_hash;
};

struct EncodedDataset {
  std::vector<EncodedInstance> instances;
  EncodingMap encoding_map;
  Provenance provenance;
  /// Raw label strings by position, kept until binarization.
  std::vector<std::optional<std::string>> raw_labels;
  /// Number of categorical groups encoded as all zeros because the category was unseen at fit time.
  std::size_t unseen_categories = 0;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  std::size_t feature_count() const { return encoding_map.feature_count; }
};

struct LoadOptions {
  std::optional<bool> has_header;  // overrides the schema flag when set
};

std::vector<RawRecord> load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                                const LoadOptions& options = {});

/// Parses CSV text already in memory; `source` names it in error messages.
std::vector<RawRecord> parse_csv(std::string_view text, const FeatureSchema& schema,
                                 const LoadOptions& options = {}, std::string_view source = "<memory>");

EncodingMap fit_encoding(std::span<const RawRecord> records, const FeatureSchema& schema);

EncodedDataset encode(std::span<const RawRecord> records, const EncodingMap& map,
                      const FeatureSchema& schema);

EncodedDataset binarize_labels(EncodedDataset dataset, std::string_view normal_label);

struct SplitOptions {
  bool stratified = false;
};

struct SplitResult {
  EncodedDataset train;
  EncodedDataset test;
  /// Set when rounding left one side empty.
  bool warning = false;
};

/// Seeded shuffle-then-split; instances keep their original ids.
SplitResult split(const EncodedDataset& dataset, double train_fraction, std::uint64_t seed,
                  const SplitOptions& options = {});

/// Subset with the given ids, in the given order.
EncodedDataset subset(const EncodedDataset& dataset, std::span<const std::size_t> ids);

// Snapshot persistence.

nlohmann::json snapshot_to_json(const EncodedDataset& dataset, bool include_matrix = true);
EncodedDataset snapshot_from_json(const nlohmann::json& j);

}  // namespace alids::dataset
