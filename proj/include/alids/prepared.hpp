#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "alids/dataset.hpp"

namespace alids::dataset {

/// Train/test id partition written next to an encoded snapshot.
struct SplitManifest {
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  bool stratified = false;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
  bool warning = false;

  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

/// An encoded, binarized dataset with its split, as produced by `prepare`.
struct PreparedDataset {
  std::shared_ptr<const EncodedDataset> all;
  std::shared_ptr<const EncodedDataset> train;
  std::shared_ptr<const EncodedDataset> test;
  SplitManifest manifest;
};

struct PrepareOptions {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = false;
};

/// load_csv -> fit_encoding -> encode -> binarize_labels -> split.
PreparedDataset prepare(const std::filesystem::path& csv, const FeatureSchema& schema, const PrepareOptions& options);

/// Builds train/test views from an encoded dataset and a manifest.
PreparedDataset assemble(EncodedDataset all, SplitManifest manifest);

inline constexpr const char* kSnapshotFile = "dataset.json";
inline constexpr const char* kManifestFile = "manifest.json";

void write_prepared(const PreparedDataset& prepared, const std::filesystem::path& dir);
PreparedDataset read_prepared(const std::filesystem::path& dir);

struct ClassBalance {
  std::size_t normal = 0;
  std::size_t attack = 0;
};
ClassBalance class_balance(const EncodedDataset& d);

}  // namespace alids::dataset
