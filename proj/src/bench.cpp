#include "alids/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "alids/outlier.hpp"
#include "alids/prepared.hpp"
#include "alids/random.hpp"

namespace alids::bench {

using nlohmann::json;

namespace {

std::vector<std::string> unique_names(const std::vector<query::QueryStrategy>& strategies) {
  std::vector<std::string> names;
  for (const auto& s : strategies) {
    auto base = s.name();
    auto name = base;
    for (int i = 2; std::find(names.begin(), names.end(), name) != names.end(); ++i) {
      name = base + "#" + std::to_string(i);
    }
    names.push_back(name);
  }
  return names;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::vector<double> lof_for(const dataset::EncodedDataset& train, std::size_t k) {
  const std::size_t n = train.size();
  if (n < 2) return std::vector<double>(n, 1.0);
  std::vector<outlier::Point> points;
  points.reserve(n);
  for (const auto& inst : train.instances) points.push_back(inst.features);
  const auto scores = outlier::lof_scores(points, {outlier::effective_k(k, n)});
  std::vector<double> out(n);
  for (const auto& s : scores) out[s.id] = s.score;
  return out;
}

}  // namespace

void BenchConfig::validate() const {
  if (strategies.empty()) throw ConfigError("bench: at least one strategy is required");
  if (repetitions == 0) throw ConfigError("bench: repetitions must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("bench: train_fraction must lie in (0,1)");
  if (!prepared && (dataset.empty() || schema.empty())) {
    throw ConfigError("bench: either 'prepared' or both 'dataset' and 'schema' are required");
  }
  for (const auto& s : strategies) s.validate();
  auto probe = session;
  for (const auto& s : strategies) {
    probe.strategy = s;
    probe.validate();
  }
}

BenchConfig BenchConfig::from_json(const json& j, const std::filesystem::path& base) {
  BenchConfig c;
  try {
    if (j.contains("prepared")) c.prepared = resolve(j.at("prepared").get<std::string>(), base);
    if (j.contains("dataset")) c.dataset = resolve(j.at("dataset").get<std::string>(), base);
    if (j.contains("schema")) c.schema = resolve(j.at("schema").get<std::string>(), base);
    for (const auto& s : j.at("strategies")) c.strategies.push_back(query::QueryStrategy::from_json(s));
    c.repetitions = j.value("repetitions", c.repetitions);
    c.seed = j.value("seed", c.seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.stratified = j.value("stratified", c.stratified);
    c.max_instances = j.value("max_instances", c.max_instances);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base);
    json session = j.value("session", json::object());
    if (j.contains("stop")) session["stop"] = j.at("stop");
    c.session = core::SessionConfig::from_json(session);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  c.validate();
  return c;
}

json BenchConfig::to_json() const {
  json strategies_json = json::array();
  for (const auto& s : strategies) strategies_json.push_back(s.to_json());
  json j = {{"strategies", strategies_json}, {"repetitions", repetitions},     {"seed", seed},
            {"train_fraction", train_fraction}, {"stratified", stratified}, {"max_instances", max_instances},
            {"session", session.to_json()},     {"output_dir", output_dir.string()}};
  if (prepared) {
    j["prepared"] = prepared->string();
  } else {
    j["dataset"] = dataset.string();
    j["schema"] = schema.string();
  }
  return j;
}

std::optional<double> median_labels(std::vector<std::optional<std::size_t>> values) {
  if (values.empty()) return std::nullopt;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  v.reserve(values.size());
  for (const auto& x : values) v.push_back(x ? static_cast<double>(*x) : inf);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double m = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  if (!std::isfinite(m)) return std::nullopt;
  return m;
}

const StrategySummary* BenchSummary::find(const std::string& name) const {
  for (const auto& s : strategies) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json BenchSummary::to_json() const {
  json per_strategy = json::array();
  for (const auto& s : strategies) {
    json labels = json::array();
    for (const auto& l : s.labels_to_success) labels.push_back(l ? json(*l) : json(nullptr));
    per_strategy.push_back({{"name", s.name},
                            {"runs", s.runs},
                            {"successes", s.successes},
                            {"median_labels_to_success", s.median_labels ? json(*s.median_labels) : json(nullptr)},
                            {"threshold_reached", s.threshold_reached()},
                            {"labels_to_success", labels}});
  }
  json ratios = json::object();
  for (const auto& [name, r] : ratios_vs_random) ratios[name] = r ? json(*r) : json(nullptr);
  json runs_json = json::array();
  for (const auto& r : runs) {
    runs_json.push_back({{"strategy", r.strategy},
                         {"repetition", r.repetition},
                         {"seed", r.seed},
                         {"status", core::status_name(r.status)},
                         {"labels_used", r.labels_used}});
  }
  return {{"strategies", per_strategy}, {"ratio_vs_random", ratios}, {"runs", runs_json}};
}

dataset::EncodedDataset load_bench_dataset(const BenchConfig& config) {
  dataset::EncodedDataset data;
  if (config.prepared) {
    data = *dataset::read_prepared(*config.prepared).all;
  } else {
    const auto schema = dataset::FeatureSchema::load(config.schema);
    const auto records = dataset::load_csv(config.dataset, schema);
    if (records.empty()) throw DatasetError(config.dataset.string() + ": no records");
    const auto map = dataset::fit_encoding(records, schema);
    data = dataset::binarize_labels(dataset::encode(records, map, schema), schema.normal_label);
    data.provenance.source = config.dataset.string();
  }
  if (config.max_instances > 0 && data.size() > config.max_instances) {
    std::vector<std::size_t> ids;
    for (const auto& inst : data.instances) ids.push_back(inst.id);
    Rng rng(derive_seed(config.seed, 0x5ab5));
    rng.shuffle(std::span<std::size_t>(ids));
    ids.resize(config.max_instances);
    std::sort(ids.begin(), ids.end());
    data = dataset::subset(data, ids);
  }
  return data;
}

BenchSummary run_bench(const BenchConfig& config, const dataset::EncodedDataset& data) {
  config.validate();
  const auto names = unique_names(config.strategies);
  const std::size_t reps = config.repetitions;
  const std::size_t n_strategies = config.strategies.size();

  std::vector<RunResult> results(reps * n_strategies);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;

  auto work = [&] {
    for (;;) {
      const std::size_t rep = next.fetch_add(1);
      if (rep >= reps) return;
      {
        std::lock_guard lock(error_mutex);
        if (!first_error.empty()) return;
      }
      const std::uint64_t seed = config.seed + rep;
      std::size_t current = 0;
      try {
        auto parts = dataset::split(data, config.train_fraction, seed, {config.stratified});
        auto train = std::make_shared<const dataset::EncodedDataset>(std::move(parts.train));
        auto test = std::make_shared<const dataset::EncodedDataset>(std::move(parts.test));
        const auto lof = lof_for(*train, config.session.lof_k);
        for (current = 0; current < n_strategies; ++current) {
          auto session_config = config.session;
          session_config.strategy = config.strategies[current];
          session_config.seed = seed;
          session_config.oracle = core::OracleKind::dataset;
          auto session = core::Session::init(train, test, session_config, lof);
          core::run_with_oracle(session);
          auto& r = results[rep * n_strategies + current];
          r.strategy = names[current];
          r.repetition = rep;
          r.seed = seed;
          r.status = session.status();
          r.labels_used = session.labels_used();
          r.curve = session.curve();
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (first_error.empty()) {
          first_error = "run failed (strategy " + names[std::min(current, n_strategies - 1)] + ", seed " +
                        std::to_string(seed) + "): " + e.what();
        }
        return;
      }
    }
  };

  std::size_t jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, reps);
  if (jobs <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(work);
  }
  if (!first_error.empty()) throw Error(first_error);

  BenchSummary summary;
  const StrategySummary* random_summary = nullptr;
  for (std::size_t s = 0; s < n_strategies; ++s) {
    StrategySummary ss;
    ss.name = names[s];
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const auto& r = results[rep * n_strategies + s];
      ++ss.runs;
      if (r.success()) {
        ++ss.successes;
        ss.labels_to_success.emplace_back(r.labels_used);
      } else {
        ss.labels_to_success.emplace_back(std::nullopt);
      }
    }
    ss.median_labels = median_labels(ss.labels_to_success);
    summary.strategies.push_back(std::move(ss));
  }
  for (std::size_t s = 0; s < n_strategies; ++s) {
    if (config.strategies[s].kind == query::StrategyKind::random) {
      random_summary = &summary.strategies[s];
      break;
    }
  }
  if (random_summary) {
    for (std::size_t s = 0; s < n_strategies; ++s) {
      if (config.strategies[s].kind == query::StrategyKind::random) continue;
      const auto& ss = summary.strategies[s];
      std::optional<double> ratio;
      if (ss.median_labels && random_summary->median_labels) ratio = *ss.median_labels / *random_summary->median_labels;
      summary.ratios_vs_random.emplace_back(ss.name, ratio);
    }
  }
  summary.runs = std::move(results);
  return summary;
}

void write_bench_outputs(const BenchConfig& config, const BenchSummary& summary) {
  const auto curves = config.output_dir / "curves";
  std::filesystem::create_directories(curves);
  for (const auto& r : summary.runs) {
    std::ofstream out(curves / (r.strategy + "_rep" + std::to_string(r.repetition) + ".csv"), std::ios::binary);
    out << core::curve_csv(r.curve);
    if (!out) throw Error("failed writing curve for " + r.strategy);
  }
  std::ofstream out(config.output_dir / "summary.json", std::ios::binary);
  auto j = summary.to_json();
  j["config"] = config.to_json();
  out << j.dump(2) << "\n";
  if (!out) throw Error("failed writing summary.json");
}

}  // namespace alids::bench
