#include "alids/prepared.hpp"

#include <fstream>
#include <set>

#include "alids/error.hpp"

namespace alids::dataset {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
    if (!out) throw Error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

json SplitManifest::to_json() const {
  return {{"seed", seed},           {"train_fraction", train_fraction}, {"stratified", stratified},
          {"train_ids", train_ids}, {"test_ids", test_ids},             {"warning", warning}};
}

SplitManifest SplitManifest::from_json(const json& j) {
  try {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    m.stratified = j.value("stratified", false);
    m.train_ids = j.at("train_ids").get<std::vector<std::size_t>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::size_t>>();
    m.warning = j.value("warning", false);
    return m;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest: ") + e.what());
  }
}

PreparedDataset assemble(EncodedDataset all, SplitManifest manifest) {
  std::set<std::size_t> seen;
  for (const auto id : manifest.train_ids) seen.insert(id);
  for (const auto id : manifest.test_ids) {
    if (!seen.insert(id).second) throw DatasetError("manifest: id " + std::to_string(id) + " is in both splits");
  }
  if (seen.size() != all.size()) throw DatasetError("manifest does not cover the dataset");
  PreparedDataset p;
  p.train = std::make_shared<const EncodedDataset>(subset(all, manifest.train_ids));
  p.test = std::make_shared<const EncodedDataset>(subset(all, manifest.test_ids));
  p.all = std::make_shared<const EncodedDataset>(std::move(all));
  p.manifest = std::move(manifest);
  return p;
}

PreparedDataset prepare(const std::filesystem::path& csv, const FeatureSchema& schema, const PrepareOptions& options) {
  const auto records = load_csv(csv, schema);
  if (records.empty()) throw DatasetError(csv.string() + ": no records");
  const auto map = fit_encoding(records, schema);
  auto encoded = binarize_labels(encode(records, map, schema), schema.normal_label);
  encoded.provenance.source = csv.string();
  auto parts = split(encoded, options.train_fraction, options.seed, {options.stratified});

  SplitManifest m;
  m.seed = options.seed;
  m.train_fraction = options.train_fraction;
  m.stratified = options.stratified;
  m.warning = parts.warning;
  for (const auto& inst : parts.train.instances) m.train_ids.push_back(inst.id);
  for (const auto& inst : parts.test.instances) m.test_ids.push_back(inst.id);

  PreparedDataset p;
  p.train = std::make_shared<const EncodedDataset>(std::move(parts.train));
  p.test = std::make_shared<const EncodedDataset>(std::move(parts.test));
  p.all = std::make_shared<const EncodedDataset>(std::move(encoded));
  p.manifest = std::move(m);
  return p;
}

void write_prepared(const PreparedDataset& prepared, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / kSnapshotFile, snapshot_to_json(*prepared.all).dump());
  write_file(dir / kManifestFile, prepared.manifest.to_json().dump(2) + "\n");
}

PreparedDataset read_prepared(const std::filesystem::path& dir) {
  auto all = snapshot_from_json(read_json(dir / kSnapshotFile));
  for (const auto& inst : all.instances) {
    if (!inst.label) throw DatasetError(dir.string() + ": prepared dataset has unlabeled instance " + std::to_string(inst.id));
  }
  return assemble(std::move(all), SplitManifest::from_json(read_json(dir / kManifestFile)));
}

ClassBalance class_balance(const EncodedDataset& d) {
  ClassBalance b;
  for (const auto& inst : d.instances) {
    if (inst.label.value_or(0) == 1) {
      ++b.attack;
    } else {
      ++b.normal;
    }
  }
  return b;
}

}  // namespace alids::dataset
