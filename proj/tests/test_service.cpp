#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "alids/prepared.hpp"
#include "alids/service.hpp"
#include "fixtures.hpp"

using namespace alids;
using nlohmann::json;

namespace {

/// A prepared blobs dataset named "blobs" and a running service on an ephemeral port.
struct Harness {
  fixtures::TempDir dir;
  std::optional<service::LabelingService> svc;
  std::optional<httplib::Client> client;
  dataset::PreparedDataset data;

  explicit Harness(std::size_t n = 300, double sd = 0.06) {
    fixtures::write_file(dir / "blobs.csv", fixtures::blobs_csv(n, 12, sd));
    data = dataset::prepare(dir / "blobs.csv", fixtures::blobs_schema(), {0.8, 5, false});
    dataset::write_prepared(data, dir / "datasets" / "blobs");
    start();
  }

  void start() {
    service::ServiceConfig config;
    config.port = 0;
    config.data_dir = dir / "datasets";
    config.snapshot_dir = dir / "sessions";
    svc.emplace(config);
    svc->load_snapshots();
    const int port = svc->start();
    client.emplace("127.0.0.1", port);
  }

  void restart() {
    client.reset();
    svc->stop();
    svc.reset();
    start();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  std::string create(const json& config) {
    const auto r = post("/sessions", {{"dataset", "blobs"}, {"config", config}});
    REQUIRE(r);
    REQUIRE_MESSAGE(r->status == 201, r->body);
    return json::parse(r->body).at("session_id").get<std::string>();
  }

  int truth(std::size_t id) const {
    for (const auto& inst : data.train->instances) {
      if (inst.id == id) return *inst.label;
    }
    FAIL("unknown id " << id);
    return -1;
  }

  /// Answers every query truthfully until the session stops.
  void drive(const std::string& id) {
    for (;;) {
      const auto q = client->Get("/sessions/" + id + "/query");
      REQUIRE(q);
      if (q->status == 409) return;
      REQUIRE(q->status == 200);
      const auto body = json::parse(q->body);
      for (const auto& inst : body.at("instances")) {
        const auto iid = inst.at("id").get<std::size_t>();
        const auto r = post("/sessions/" + id + "/label", {{"instance_id", iid}, {"label", truth(iid)}});
        REQUIRE(r);
        REQUIRE_MESSAGE(r->status == 200, r->body);
      }
    }
  }
};

json small(std::size_t budget = 60) { return {{"stop", {{"label_budget", budget}}}, {"seed", 3}}; }

}  // namespace

TEST_CASE("health probe and unknown routes") {
  Harness h;
  const auto r = h.client->Get("/healthz");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body).at("sessions") == 0);
  const auto missing = h.client->Get("/nope");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).contains("error"));
  CHECK(h.client->Get("/sessions/unknown/query")->status == 404);
  CHECK(h.client->Get("/sessions/unknown/metrics")->status == 404);
}

TEST_CASE("session creation validates input") {
  Harness h;
  auto r = h.post("/sessions", {{"dataset", "blobs"}, {"config", {{"stop", {{"label_budget", -1}}}}}});
  REQUIRE(r);
  CHECK(r->status == 400);
  const auto body = json::parse(r->body);
  REQUIRE(body.contains("fields"));
  CHECK(body.at("fields")[0].at("field") == "stop.label_budget");

  r = h.post("/sessions", {{"dataset", "absent"}});
  CHECK(r->status == 404);
  r = h.post("/sessions", {{"dataset", "../etc"}});
  CHECK(r->status == 404);
  r = h.client->Post("/sessions", "{not json", "application/json");
  CHECK(r->status == 400);
  r = h.post("/sessions", {{"config", json::object()}});
  CHECK(r->status == 400);
  // The pool has 240 instances.
  r = h.post("/sessions", {{"dataset", "blobs"}, {"config", {{"stop", {{"label_budget", 241}}}}}});
  CHECK(r->status == 400);

  r = h.post("/sessions", {{"dataset", "blobs"}, {"config", small()}});
  REQUIRE(r->status == 201);
  CHECK(json::parse(r->body).at("status") == "awaiting_label");
}

TEST_CASE("query is idempotent until answered") {
  Harness h;
  const auto id = h.create(small());
  const auto a = h.client->Get("/sessions/" + id + "/query");
  const auto b = h.client->Get("/sessions/" + id + "/query");
  REQUIRE(a->status == 200);
  CHECK(a->body == b->body);
  const auto body = json::parse(a->body);
  CHECK(body.at("instances").size() == 10);  // the LOF seed batch
  const auto& first = body.at("instances")[0];
  CHECK(first.at("posterior").is_null());
  CHECK(first.at("lof_score").is_number());
  CHECK(first.at("features").size() == 2);
  CHECK(first.at("features")[0].at("name") == "x");
}

TEST_CASE("label submissions") {
  Harness h;
  const auto id = h.create(small());
  const auto q = json::parse(h.client->Get("/sessions/" + id + "/query")->body);
  const auto& ids = q.at("instances");

  const std::string label = "/sessions/" + id + "/label";
  CHECK(h.post(label, {{"instance_id", ids[0].at("id")}, {"label", 2}})->status == 400);
  CHECK(h.post(label, {{"instance_id", -4}, {"label", 1}})->status == 400);
  CHECK(h.post(label, {{"label", 1}})->status == 400);

  // An id outside the pending batch.
  std::size_t outside = 0;
  for (const auto& inst : h.data.train->instances) {
    bool pending = false;
    for (const auto& p : ids) pending |= p.at("id") == inst.id;
    if (!pending) {
      outside = inst.id;
      break;
    }
  }
  CHECK(h.post(label, {{"instance_id", outside}, {"label", 0}})->status == 409);

  json last;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto iid = ids[i].at("id").get<std::size_t>();
    const auto r = h.post(label, {{"instance_id", iid}, {"label", h.truth(iid)}});
    REQUIRE(r->status == 200);
    last = json::parse(r->body);
    if (i + 1 < ids.size()) {
      CHECK(last.at("curve_point").is_null());
      CHECK(last.at("pending_remaining") == ids.size() - i - 1);
    }
    if (i == 0) CHECK(h.post(label, {{"instance_id", iid}, {"label", h.truth(iid)}})->status == 409);
  }
  REQUIRE(last.at("curve_point").is_object());
  CHECK(last.at("curve_point").at("labels_used") == 10);
  CHECK(last.at("curve_point").at("round") == 1);
  CHECK(last.at("disagreement") == false);

  const auto next = h.client->Get("/sessions/" + id + "/query");
  if (last.at("status") == "awaiting_label") {
    CHECK(json::parse(next->body).at("instances")[0].at("posterior").is_number());
  } else {
    CHECK(next->status == 409);
  }
}

TEST_CASE("curve and metrics") {
  Harness h;
  const auto id = h.create(small());
  auto curve = json::parse(h.client->Get("/sessions/" + id + "/curve")->body);
  CHECK(curve.at("points").empty());
  CHECK(curve.at("status") == "awaiting_label");
  auto metrics = json::parse(h.client->Get("/sessions/" + id + "/metrics")->body);
  CHECK(metrics.at("latest").is_null());
  CHECK(metrics.at("labels_used") == 0);
  CHECK(metrics.at("stop").at("label_budget") == 60);

  h.drive(id);
  curve = json::parse(h.client->Get("/sessions/" + id + "/curve")->body);
  metrics = json::parse(h.client->Get("/sessions/" + id + "/metrics")->body);
  CHECK(curve.at("status") == "stopped_success");
  CHECK(metrics.at("latest") == curve.at("points").back());
  CHECK(metrics.at("labels_used") == curve.at("points").back().at("labels_used"));

  const auto stopped = h.client->Get("/sessions/" + id + "/query");
  CHECK(stopped->status == 409);
  CHECK(json::parse(stopped->body).at("status") == "stopped_success");

  const auto detail = json::parse(h.client->Get("/sessions/" + id)->body);
  CHECK(detail.at("dataset") == "blobs");
  CHECK(detail.at("config").at("oracle") == "external");
}

TEST_CASE("concurrent submissions of one label: exactly one wins") {
  Harness h;
  const auto id = h.create(small());
  const auto q = json::parse(h.client->Get("/sessions/" + id + "/query")->body);
  const auto iid = q.at("instances")[0].at("id").get<std::size_t>();
  const int label = h.truth(iid);
  const int port = h.svc->port();

  std::atomic<int> ok{0}, conflict{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      httplib::Client c("127.0.0.1", port);
      const auto r = c.Post("/sessions/" + id + "/label", json({{"instance_id", iid}, {"label", label}}).dump(),
                            "application/json");
      if (r && r->status == 200) ++ok;
      if (r && r->status == 409) ++conflict;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 1);
  CHECK(conflict == 7);
}

TEST_CASE("sessions survive a restart") {
  Harness h;
  const auto id = h.create(small());
  const auto q = json::parse(h.client->Get("/sessions/" + id + "/query")->body);
  const auto& ids = q.at("instances");
  for (int i = 0; i < 4; ++i) {
    const auto iid = ids[i].at("id").get<std::size_t>();
    REQUIRE(h.post("/sessions/" + id + "/label", {{"instance_id", iid}, {"label", h.truth(iid)}})->status == 200);
  }
  h.restart();
  CHECK(h.svc->session_count() == 1);
  // The half-answered batch comes back unchanged.
  CHECK(json::parse(h.client->Get("/sessions/" + id + "/query")->body) == q);
  const auto answered = ids[0].at("id").get<std::size_t>();
  CHECK(h.post("/sessions/" + id + "/label", {{"instance_id", answered}, {"label", h.truth(answered)}})->status == 409);
  for (std::size_t i = 4; i < ids.size(); ++i) {
    const auto iid = ids[i].at("id").get<std::size_t>();
    REQUIRE(h.post("/sessions/" + id + "/label", {{"instance_id", iid}, {"label", h.truth(iid)}})->status == 200);
  }
  const auto metrics = json::parse(h.client->Get("/sessions/" + id + "/metrics")->body);
  CHECK(metrics.at("labels_used") == 10);
  CHECK(metrics.at("rounds") == 1);
}

TEST_CASE("corrupt snapshots are skipped") {
  Harness h;
  h.create(small());
  fixtures::write_file(h.dir / "sessions" / "junk.json", "{\"session_id\": 3");
  h.restart();
  CHECK(h.svc->session_count() == 1);
}

TEST_CASE("labeling through the API matches the in-process oracle") {
  Harness h(400, 0.12);
  for (const char* kind : {"uncertainty", "random", "qbc"}) {
    json config = small(80);
    config["strategy"] = {{"kind", kind}};
    config["batch_size"] = 2;
    const auto id = h.create(config);
    h.drive(id);
    const auto api_curve = json::parse(h.client->Get("/sessions/" + id + "/curve")->body).at("points");

    auto local_config = core::SessionConfig::from_json(config);
    local_config.oracle = core::OracleKind::dataset;
    auto local = core::Session::init(h.data.train, h.data.test, local_config);
    core::run_with_oracle(local);
    json local_curve = json::array();
    for (const auto& p : local.curve()) local_curve.push_back(core::curve_point_json(p));
    CHECK_MESSAGE(api_curve == local_curve, kind);
  }
}
