// Command-line front end: prepare, lof, bench, serve.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>
#include <unistd.h>
#include <unordered_map>

#include "alids/bench.hpp"
#include "alids/outlier.hpp"
#include "alids/prepared.hpp"
#include "alids/service.hpp"

namespace {

using namespace alids;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct PrepareArgs {
  std::string csv;
  std::string schema;
  std::string out;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  bool stratified = false;
};

struct LofArgs {
  std::string snapshot;
  std::size_t k = 20;
  std::string out;
  std::string subset = "all";
};

struct BenchArgs {
  std::string config;
  std::string out;
  std::size_t jobs = 0;
  std::size_t repetitions = 0;
};

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "data";
  std::string snapshot_dir = "sessions";
  std::string ui_dir;
};

int cmd_prepare(const PrepareArgs& a) {
  const auto schema = dataset::FeatureSchema::load(a.schema);
  const auto prepared = dataset::prepare(a.csv, schema, {a.train_fraction, a.seed, a.stratified});
  dataset::write_prepared(prepared, a.out);
  const auto all = dataset::class_balance(*prepared.all);
  const auto train = dataset::class_balance(*prepared.train);
  const auto test = dataset::class_balance(*prepared.test);
  std::printf("instances %zu (normal %zu, attack %zu), features %zu\n", prepared.all->size(), all.normal, all.attack,
              prepared.all->feature_count());
  std::printf("train %zu (normal %zu, attack %zu)\n", prepared.train->size(), train.normal, train.attack);
  std::printf("test  %zu (normal %zu, attack %zu)\n", prepared.test->size(), test.normal, test.attack);
  if (prepared.all->unseen_categories) std::printf("unseen categories: %zu\n", prepared.all->unseen_categories);
  if (prepared.manifest.warning) std::fprintf(stderr, "warning: one side of the split is empty\n");
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int cmd_lof(const LofArgs& a) {
  std::filesystem::path path = a.snapshot;
  std::shared_ptr<const dataset::EncodedDataset> data;
  if (std::filesystem::is_directory(path)) {
    if (a.subset == "train") {
      data = dataset::read_prepared(path).train;
    } else {
      std::ifstream in(path / dataset::kSnapshotFile);
      if (!in) throw DatasetError("cannot open " + (path / dataset::kSnapshotFile).string());
      data = std::make_shared<const dataset::EncodedDataset>(dataset::snapshot_from_json(nlohmann::json::parse(in)));
    }
  } else {
    if (a.subset == "train") throw ConfigError("--subset train needs a prepared dataset directory");
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open " + path.string());
    data = std::make_shared<const dataset::EncodedDataset>(dataset::snapshot_from_json(nlohmann::json::parse(in)));
  }
  std::vector<outlier::Point> points;
  for (const auto& inst : data->instances) points.push_back(inst.features);
  const auto scores = outlier::lof_scores(points, {a.k});
  std::vector<outlier::LofScore> by_id;
  for (const auto& s : scores) by_id.push_back({data->instances[s.id].id, s.score});
  const auto ranking = outlier::rank_pool(by_id, 1.0);

  std::unordered_map<std::size_t, double> score_of;
  for (const auto& s : by_id) score_of[s.id] = s.score;
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw Error("cannot write " + a.out);
  out << "id,score\n";
  char buf[48];
  for (const auto id : ranking) {
    std::snprintf(buf, sizeof buf, "%.17g", score_of[id]);
    out << id << "," << buf << "\n";
  }
  if (!out) throw Error("failed writing " + a.out);
  std::printf("scored %zu instances (k = %zu); top id %zu\n", ranking.size(), a.k, ranking.front());
  return 0;
}

int cmd_bench(const BenchArgs& a) {
  std::ifstream in(a.config);
  if (!in) throw ConfigError("cannot open bench config " + a.config);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(a.config + ": " + e.what());
  }
  auto config = bench::BenchConfig::from_json(j, std::filesystem::path(a.config).parent_path());
  if (!a.out.empty()) config.output_dir = a.out;
  if (a.jobs) config.jobs = a.jobs;
  if (a.repetitions) config.repetitions = a.repetitions;
  const auto data = bench::load_bench_dataset(config);
  const auto summary = bench::run_bench(config, data);
  bench::write_bench_outputs(config, summary);
  for (const auto& s : summary.strategies) {
    if (s.median_labels) {
      std::printf("%-32s successes %zu/%zu  median labels %.1f\n", s.name.c_str(), s.successes, s.runs, *s.median_labels);
    } else {
      std::printf("%-32s successes %zu/%zu  threshold not reached\n", s.name.c_str(), s.successes, s.runs);
    }
  }
  for (const auto& [name, ratio] : summary.ratios_vs_random) {
    if (ratio) std::printf("ratio %s / random = %.3f\n", name.c_str(), *ratio);
  }
  std::printf("wrote %s\n", config.output_dir.string().c_str());
  return 0;
}

int cmd_serve(const ServeArgs& a) {
  service::ServiceConfig config;
  config.host = a.host;
  config.port = a.port;
  config.data_dir = a.data_dir;
  config.snapshot_dir = a.snapshot_dir;
  if (!a.ui_dir.empty()) config.ui_dir = a.ui_dir;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::LabelingService svc(config);
  const auto restored = svc.load_snapshots();
  const int port = svc.bind();
  std::printf("listening on %s:%d (%zu session(s) restored)\n", a.host.c_str(), port, restored);
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    svc.stop();
  });
  svc.run();
  // Wake the waiter if the server stopped for another reason.
  kill(getpid(), SIGTERM);
  waiter.join();
  svc.snapshot_all();
  std::printf("stopped; %zu session(s) snapshotted\n", svc.session_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-in-the-loop active learning for wireless intrusion detection"};
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* p = app.add_subcommand("prepare", "Encode a CSV dataset and write the train/test split");
  p->add_option("--csv", prepare.csv, "Flow-record CSV")->required();
  p->add_option("--schema", prepare.schema, "Feature schema JSON")->required();
  p->add_option("--out", prepare.out, "Output directory")->required();
  p->add_option("--seed", prepare.seed, "Split seed");
  p->add_option("--train-fraction", prepare.train_fraction, "Training fraction")->check(CLI::Range(0.0, 1.0));
  p->add_flag("--stratified", prepare.stratified, "Split each class separately");

  LofArgs lof;
  auto* l = app.add_subcommand("lof", "Score instances with the Local Outlier Factor");
  l->add_option("--snapshot", lof.snapshot, "Prepared dataset directory or encoded snapshot JSON")->required();
  l->add_option("--k", lof.k, "Neighbor count");
  l->add_option("--out", lof.out, "Scores CSV (id,score), highest first")->required();
  l->add_option("--subset", lof.subset, "all or train")->check(CLI::IsMember({"all", "train"}));

  BenchArgs bench_args;
  auto* b = app.add_subcommand("bench", "Compare query strategies against random selection");
  b->add_option("--config", bench_args.config, "Bench config JSON")->required();
  b->add_option("--out", bench_args.out, "Output directory (overrides config)");
  b->add_option("--jobs", bench_args.jobs, "Parallel repetitions");
  b->add_option("--repetitions", bench_args.repetitions, "Repetitions (overrides config)");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the labeling HTTP service");
  s->add_option("--host", serve.host, "Listen address")->envname("ALIDS_HOST");
  s->add_option("--port", serve.port, "Listen port")->envname("ALIDS_PORT");
  s->add_option("--data-dir", serve.data_dir, "Prepared datasets directory")->envname("ALIDS_DATA_DIR");
  s->add_option("--snapshot-dir", serve.snapshot_dir, "Session snapshot directory")->envname("ALIDS_SNAPSHOT_DIR");
  s->add_option("--ui-dir", serve.ui_dir, "Static labeling console bundle")->envname("ALIDS_UI_DIR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*p) return cmd_prepare(prepare);
    if (*l) return cmd_lof(lof);
    if (*b) return cmd_bench(bench_args);
    if (*s) return cmd_serve(serve);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const service::BindError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
