#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "alids/dataset.hpp"
#include "alids/prepared.hpp"

namespace fixtures {

/// Two Gaussian blobs in the plane, normal around (0.3, 0.3) and attack
/// around (0.7, 0.7), alternating rows. CSV columns x,y,label without header.
std::string blobs_csv(std::size_t n, std::uint64_t seed, double sd = 0.06);
alids::dataset::FeatureSchema blobs_schema();
alids::dataset::EncodedDataset blobs(std::size_t n, std::uint64_t seed, double sd = 0.06);

/// Synthetic flow records in the KDD Cup 99 layout (41 features + label).
/// Class mix follows the 10% subset: smurf and neptune floods dominate,
/// normal traffic is about a fifth, and rare remote-to-local attacks look
/// much like normal sessions.
std::string kdd_surrogate_csv(std::size_t n, std::uint64_t seed);
alids::dataset::FeatureSchema kdd_schema();

/// Encoded, binarized data from a CSV string.
alids::dataset::EncodedDataset encode_csv(const std::string& csv, const alids::dataset::FeatureSchema& schema);

std::filesystem::path source_dir();
std::filesystem::path cli_path();

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

/// Runs the alids binary with `args` appended (shell-quoted by the caller).
CommandResult run_cli(const std::string& args);

}  // namespace fixtures
