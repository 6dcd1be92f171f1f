#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alids/dataset.hpp"
#include "alids/session.hpp"

namespace alids::bench {

/// Strategy comparison protocol: for each repetition r the data is re-split
/// with seed + r and every strategy runs to its stop rule on that split.
struct BenchConfig {
  std::filesystem::path dataset;  // CSV
  std::filesystem::path schema;   // schema JSON
  std::optional<std::filesystem::path> prepared;  // alternative to dataset + schema
  std::vector<query::QueryStrategy> strategies;
  std::size_t repetitions = 20;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  bool stratified = false;
  /// Seeded subsample applied before splitting; 0 keeps everything.
  std::size_t max_instances = 0;
  core::SessionConfig session;  // strategy and seed are overridden per run
  std::filesystem::path output_dir = "bench-out";
  std::size_t jobs = 0;  // 0 = hardware concurrency

  void validate() const;
  /// Relative paths resolve against `base`.
  static BenchConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  nlohmann::json to_json() const;
};

struct RunResult {
  std::string strategy;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  core::Status status = core::Status::running;
  std::size_t labels_used = 0;
  std::vector<core::CurvePoint> curve;

  bool success() const { return status == core::Status::stopped_success; }
};

struct StrategySummary {
  std::string name;
  std::size_t runs = 0;
  std::size_t successes = 0;
  /// Median labels to reach the stop rule; runs that never reached it count as
  /// infinite, so the median is absent when half or more failed.
  std::optional<double> median_labels;
  bool threshold_reached() const { return median_labels.has_value(); }
  std::vector<std::optional<std::size_t>> labels_to_success;
};

struct BenchSummary {
  std::vector<StrategySummary> strategies;
  /// median(strategy) / median(random) for each non-random strategy, when both exist.
  std::vector<std::pair<std::string, std::optional<double>>> ratios_vs_random;
  std::vector<RunResult> runs;

  const StrategySummary* find(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Median with nullopt treated as +infinity.
std::optional<double> median_labels(std::vector<std::optional<std::size_t>> values);

/// Loads, encodes, binarizes and optionally subsamples the configured dataset.
dataset::EncodedDataset load_bench_dataset(const BenchConfig& config);

/// Runs every (repetition, strategy) pair. Throws Error naming the failing
/// strategy and seed if any run fails.
BenchSummary run_bench(const BenchConfig& config, const dataset::EncodedDataset& data);

/// Writes curves/<strategy>_rep<r>.csv and summary.json under config.output_dir.
void write_bench_outputs(const BenchConfig& config, const BenchSummary& summary);

}  // namespace alids::bench
