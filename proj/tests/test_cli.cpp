#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <csignal>
#include <fcntl.h>
#include <regex>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "alids/prepared.hpp"
#include "alids/service.hpp"
#include "fixtures.hpp"

using namespace alids;
using fixtures::run_cli;
using fixtures::TempDir;

namespace {

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string numbered_csv(std::size_t n) {
  std::ostringstream out;
  for (std::size_t i = 0; i < n; ++i) out << (i % 17) * 0.1 << "," << (i % 5) << "," << (i % 3 ? "normal" : "attack") << "\n";
  return out.str();
}

void write_blobs_inputs(const TempDir& dir, std::size_t n) {
  fixtures::write_file(dir / "data.csv", fixtures::blobs_csv(n, 21));
  fixtures::write_file(dir / "schema.json", fixtures::blobs_schema().to_json().dump());
}

/// `alids serve` running as a child process; output goes to a log file.
class ServeProcess {
 public:
  ServeProcess(const std::vector<std::string>& args, const std::filesystem::path& log) : log_(log) {
    fixtures::write_file(log, "");
    pid_ = fork();
    if (pid_ == 0) {
      const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      std::vector<std::string> all{fixtures::cli_path().string(), "serve"};
      all.insert(all.end(), args.begin(), args.end());
      std::vector<char*> argv;
      for (auto& a : all) argv.push_back(a.data());
      argv.push_back(nullptr);
      execv(argv[0], argv.data());
      _exit(127);
    }
  }
  ~ServeProcess() {
    if (pid_ > 0 && !reaped_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }

  /// Port printed on the "listening" line, or -1 if the process never got there.
  int wait_for_port() const {
    const std::regex pattern(R"(listening on [^:]+:(\d+))");
    for (int i = 0; i < 200; ++i) {
      std::smatch m;
      const auto text = fixtures::read_file(log_);
      if (std::regex_search(text, m, pattern)) return std::stoi(m[1]);
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == pid_) return -1;
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    return -1;
  }

  int terminate_and_wait() {
    kill(pid_, SIGTERM);
    return wait();
  }

  int wait() {
    int status = 0;
    waitpid(pid_, &status, 0);
    reaped_ = true;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  std::filesystem::path log_;
  pid_t pid_ = -1;
  bool reaped_ = false;
};

}  // namespace

TEST_CASE("prepare writes an 80/20 split and is reproducible") {
  TempDir dir;
  fixtures::write_file(dir / "data.csv", numbered_csv(100));
  fixtures::write_file(dir / "schema.json", fixtures::blobs_schema().to_json().dump());
  const std::string base = "prepare --csv " + q(dir / "data.csv") + " --schema " + q(dir / "schema.json") + " --seed 3";
  const auto first = run_cli(base + " --out " + q(dir / "a"));
  REQUIRE_MESSAGE(first.exit_code == 0, first.output);
  CHECK(first.output.find("train 80") != std::string::npos);
  CHECK(first.output.find("test  20") != std::string::npos);
  const auto manifest = dataset::SplitManifest::from_json(
      nlohmann::json::parse(fixtures::read_file(dir / "a" / dataset::kManifestFile)));
  CHECK(manifest.train_ids.size() == 80);
  CHECK(manifest.test_ids.size() == 20);

  REQUIRE(run_cli(base + " --out " + q(dir / "b")).exit_code == 0);
  CHECK(fixtures::read_file(dir / "a" / dataset::kManifestFile) == fixtures::read_file(dir / "b" / dataset::kManifestFile));
  CHECK(fixtures::read_file(dir / "a" / dataset::kSnapshotFile) == fixtures::read_file(dir / "b" / dataset::kSnapshotFile));
}

TEST_CASE("prepare reports usage and data errors") {
  TempDir dir;
  fixtures::write_file(dir / "data.csv", numbered_csv(10));
  CHECK(run_cli("prepare --csv " + q(dir / "data.csv") + " --schema " + q(dir / "missing.json") + " --out " +
                q(dir / "o"))
            .exit_code == 2);
  CHECK(run_cli("prepare --csv " + q(dir / "data.csv")).exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("lof ranks the far point first") {
  TempDir dir;
  fixtures::write_file(dir / "square.csv", "0,0,normal\n1,0,normal\n0,1,normal\n1,1,normal\n10,10,attack\n");
  fixtures::write_file(dir / "schema.json", fixtures::blobs_schema().to_json().dump());
  REQUIRE(run_cli("prepare --csv " + q(dir / "square.csv") + " --schema " + q(dir / "schema.json") + " --out " +
                  q(dir / "sq"))
              .exit_code == 0);
  const auto r = run_cli("lof --snapshot " + q(dir / "sq") + " --k 3 --out " + q(dir / "scores.csv"));
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  const auto csv = fixtures::read_file(dir / "scores.csv");
  std::istringstream lines(csv);
  std::string header, top;
  std::getline(lines, header);
  std::getline(lines, top);
  CHECK(header == "id,score");
  CHECK(top.rfind("4,", 0) == 0);
  // Uniform rescaling leaves the score unchanged.
  CHECK(std::stod(top.substr(2)) == doctest::Approx(9.342099196813482).epsilon(1e-12));

  REQUIRE(run_cli("lof --snapshot " + q(dir / "sq" / dataset::kSnapshotFile) + " --k 3 --out " + q(dir / "again.csv"))
              .exit_code == 0);
  CHECK(fixtures::read_file(dir / "again.csv") == csv);

  CHECK(run_cli("lof --snapshot " + q(dir / "sq") + " --k 5 --out " + q(dir / "bad.csv")).exit_code == 2);
  CHECK(run_cli("lof --snapshot " + q(dir / "nope") + " --k 2 --out " + q(dir / "bad.csv")).exit_code == 2);
}

TEST_CASE("bench writes a summary") {
  TempDir dir;
  write_blobs_inputs(dir, 200);
  const nlohmann::json config = {{"dataset", "data.csv"},
                                 {"schema", "schema.json"},
                                 {"strategies", {{{"kind", "uncertainty"}}, {{"kind", "random"}}}},
                                 {"repetitions", 2},
                                 {"stop", {{"label_budget", 80}}}};
  fixtures::write_file(dir / "bench.json", config.dump());
  const auto r = run_cli("bench --config " + q(dir / "bench.json") + " --out " + q(dir / "out") + " --jobs 2");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("random") != std::string::npos);
  const auto summary = nlohmann::json::parse(fixtures::read_file(dir / "out" / "summary.json"));
  CHECK(summary.at("runs").size() == 4);
  CHECK(std::filesystem::exists(dir / "out" / "curves" / "random_rep1.csv"));

  fixtures::write_file(dir / "broken.json", "{\"strategies\": [");
  CHECK(run_cli("bench --config " + q(dir / "broken.json")).exit_code == 2);
  fixtures::write_file(dir / "negative.json", nlohmann::json({{"dataset", "data.csv"},
                                                         {"schema", "schema.json"},
                                                         {"strategies", {{{"kind", "random"}}}},
                                                         {"stop", {{"label_budget", -3}}}})
                                             .dump());
  CHECK(run_cli("bench --config " + q(dir / "negative.json")).exit_code == 2);
}

TEST_CASE("serve answers health probes and snapshots on SIGTERM") {
  TempDir dir;
  write_blobs_inputs(dir, 200);
  REQUIRE(run_cli("prepare --csv " + q(dir / "data.csv") + " --schema " + q(dir / "schema.json") + " --out " +
                  q(dir / "datasets" / "blobs"))
              .exit_code == 0);
  ServeProcess serve({"--port", "0", "--data-dir", (dir / "datasets").string(), "--snapshot-dir",
                      (dir / "sessions").string()},
                     dir / "serve.log");
  const int port = serve.wait_for_port();
  REQUIRE_MESSAGE(port > 0, fixtures::read_file(dir / "serve.log"));

  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(nlohmann::json::parse(health->body).at("status") == "ready");

  const auto created = client.Post("/sessions", R"({"dataset":"blobs","config":{"stop":{"label_budget":50}}})",
                                   "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const auto id = nlohmann::json::parse(created->body).at("session_id").get<std::string>();

  CHECK(serve.terminate_and_wait() == 0);
  CHECK(std::filesystem::exists(dir / "sessions" / (id + ".json")));
  CHECK(fixtures::read_file(dir / "serve.log").find("1 session(s) snapshotted") != std::string::npos);

  // A second process restores the session.
  ServeProcess again({"--port", "0", "--data-dir", (dir / "datasets").string(), "--snapshot-dir",
                      (dir / "sessions").string()},
                     dir / "serve2.log");
  REQUIRE(again.wait_for_port() > 0);
  CHECK(fixtures::read_file(dir / "serve2.log").find("1 session(s) restored") != std::string::npos);
  CHECK(again.terminate_and_wait() == 0);
}

TEST_CASE("serve exits 2 when the port is taken") {
  TempDir dir;
  service::ServiceConfig config;
  config.port = 0;
  config.data_dir = dir / "datasets";
  config.snapshot_dir = dir / "sessions";
  service::LabelingService holder(config);
  const int port = holder.start();
  ServeProcess serve({"--port", std::to_string(port), "--data-dir", (dir / "datasets").string(), "--snapshot-dir",
                      (dir / "other").string()},
                     dir / "serve.log");
  CHECK(serve.wait() == 2);
  CHECK(fixtures::read_file(dir / "serve.log").find("error") != std::string::npos);
  holder.stop();
}
