#include "alids/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <regex>

#include "alids/outlier.hpp"

namespace alids::service {

using nlohmann::json;

namespace {

const std::regex kNamePattern("[A-Za-z0-9_.-]+");

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  send_json(res, status, extra);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 engine{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[20];
  std::snprintf(buf, sizeof buf, "s%016llx", static_cast<unsigned long long>(engine()));
  return buf;
}

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_body(const std::string& id, const core::Session& s) {
  const auto& stop = s.config().stop;
  json latest = s.curve().empty() ? json(nullptr) : core::curve_point_json(s.curve().back());
  return {{"session_id", id},
          {"status", core::status_name(s.status())},
          {"labels_used", s.labels_used()},
          {"rounds", s.rounds()},
          {"latest", latest},
          {"stop",
           {{"precision_min", stop.precision_min},
            {"recall_min", stop.recall_min},
            {"label_budget", stop.label_budget},
            {"max_rounds", stop.max_rounds}}}};
}

}  // namespace

LabelingService::LabelingService(ServiceConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  // The library default adds SO_REUSEPORT, which would let a second instance
  // share the port instead of failing to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
  install_routes();
}

LabelingService::~LabelingService() {
  if (server_->is_running()) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void LabelingService::install_routes() {
  auto& s = *server_;
  s.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ready"}, {"sessions", session_count()}});
  });
  s.Post("/sessions", [this](const auto& req, auto& res) { handle_create(req, res); });
  s.Get(R"(/sessions/([^/]+)/query)", [this](const auto& req, auto& res) { handle_query(req, res); });
  s.Post(R"(/sessions/([^/]+)/label)", [this](const auto& req, auto& res) { handle_label(req, res); });
  s.Get(R"(/sessions/([^/]+)/curve)", [this](const auto& req, auto& res) { handle_curve(req, res); });
  s.Get(R"(/sessions/([^/]+)/metrics)", [this](const auto& req, auto& res) { handle_metrics(req, res); });
  s.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto session = find_session(req.matches[1]);
    if (!session) return send_error(res, 404, "unknown session");
    std::lock_guard lock(session->mutex);
    auto body = metrics_body(session->id, *session->session);
    body["dataset"] = session->dataset;
    body["created_at"] = session->created_at;
    body["config"] = session->session->config().to_json();
    send_json(res, 200, body);
  });
  if (config_.ui_dir) s.set_mount_point("/", config_.ui_dir->string());
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not found" : httplib::status_message(res.status));
    }
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });
}

// ---------------------------------------------------------------------------
// Lifecycle

int LabelingService::bind() {
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ <= 0) throw BindError("cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port)) {
      throw BindError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  return port_;
}

void LabelingService::run() { server_->listen_after_bind(); }

int LabelingService::start() {
  const int port = bind();
  thread_ = std::thread([this] { run(); });
  server_->wait_until_ready();
  return port;
}

void LabelingService::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
  snapshot_all();
}

std::size_t LabelingService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

void LabelingService::snapshot_all() {
  std::vector<std::shared_ptr<ApiSession>> all;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    persist(*s);
  }
}

void LabelingService::persist(const ApiSession& s) const {
  std::filesystem::create_directories(config_.snapshot_dir);
  const json body = {{"session_id", s.id},
                     {"dataset", s.dataset},
                     {"created_at", s.created_at},
                     {"session", s.session->snapshot()}};
  const auto path = config_.snapshot_dir / (s.id + ".json");
  const auto tmp = config_.snapshot_dir / (s.id + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << body.dump();
    if (!out) throw Error("cannot write session snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::size_t LabelingService::load_snapshots() {
  if (!std::filesystem::exists(config_.snapshot_dir)) return 0;
  std::size_t loaded = 0;
  for (const auto& entry : std::filesystem::directory_iterator(config_.snapshot_dir)) {
    if (entry.path().extension() != ".json") continue;
    try {
      std::ifstream in(entry.path(), std::ios::binary);
      const auto body = json::parse(in);
      auto s = std::make_shared<ApiSession>();
      s->id = body.at("session_id").get<std::string>();
      s->dataset = body.at("dataset").get<std::string>();
      s->created_at = body.value("created_at", std::string());
      const auto data = open_dataset(s->dataset);
      if (!data) throw RestoreError("dataset '" + s->dataset + "' is gone");
      s->session = core::Session::restore(body.at("session"), data->train, data->test);
      std::unique_lock lock(sessions_mutex_);
      sessions_[s->id] = std::move(s);
      ++loaded;
    } catch (const std::exception& e) {
      std::cerr << "skipping session snapshot " << entry.path() << ": " << e.what() << "\n";
    }
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Lookup

std::shared_ptr<const dataset::PreparedDataset> LabelingService::open_dataset(const std::string& name) {
  if (!std::regex_match(name, kNamePattern) || name == "." || name == "..") return nullptr;
  {
    std::lock_guard lock(datasets_mutex_);
    if (const auto it = datasets_.find(name); it != datasets_.end()) return it->second;
  }
  const auto dir = config_.data_dir / name;
  if (!std::filesystem::exists(dir / dataset::kSnapshotFile)) return nullptr;
  auto data = std::make_shared<const dataset::PreparedDataset>(dataset::read_prepared(dir));
  std::lock_guard lock(datasets_mutex_);
  return datasets_.emplace(name, std::move(data)).first->second;
}

std::vector<double> LabelingService::lof_for(const std::string& name, const dataset::PreparedDataset& data,
                                             std::size_t k) {
  const auto key = std::make_pair(name, k);
  {
    std::lock_guard lock(datasets_mutex_);
    if (const auto it = lof_cache_.find(key); it != lof_cache_.end()) return *it->second;
  }
  const auto& train = *data.train;
  std::vector<double> scores(train.size(), 1.0);
  if (train.size() >= 2) {
    std::vector<outlier::Point> points;
    points.reserve(train.size());
    for (const auto& inst : train.instances) points.push_back(inst.features);
    for (const auto& s : outlier::lof_scores(points, {outlier::effective_k(k, train.size())})) scores[s.id] = s.score;
  }
  std::lock_guard lock(datasets_mutex_);
  lof_cache_.emplace(key, std::make_shared<const std::vector<double>>(scores));
  return scores;
}

std::shared_ptr<LabelingService::ApiSession> LabelingService::find_session(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

json LabelingService::query_body(const ApiSession& s, const core::QueryRequest& request) const {
  const auto& session = *s.session;
  const auto& map = session.train_set().encoding_map;
  json instances = json::array();
  for (std::size_t i = 0; i < request.ids.size(); ++i) {
    json features = json::array();
    for (const auto& f : dataset::decode(map, request.features[i])) {
      features.push_back({{"name", f.name}, {"value", f.value}, {"normalized", f.normalized}});
    }
    instances.push_back({{"id", request.ids[i]},
                         {"posterior", request.posteriors ? json((*request.posteriors)[i]) : json(nullptr)},
                         {"lof_score", real_or_null(request.lof_scores[i])},
                         {"features", features}});
  }
  return {{"session_id", s.id},
          {"status", core::status_name(session.status())},
          {"round", request.round},
          {"strategy", session.config().strategy.name()},
          {"instances", instances}};
}

// ---------------------------------------------------------------------------
// Handlers

void LabelingService::handle_create(const httplib::Request& req, httplib::Response& res) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return send_error(res, 400, "request body is not valid JSON");
  }
  if (!body.is_object() || !body.contains("dataset") || !body.at("dataset").is_string()) {
    return send_error(res, 400, "invalid request",
                      {{"fields", json::array({{{"field", "dataset"}, {"message", "required string"}}})}});
  }
  const auto name = body.at("dataset").get<std::string>();
  json config_json = body.value("config", json::object());
  if (!config_json.is_object()) {
    return send_error(res, 400, "invalid config",
                      {{"fields", json::array({{{"field", "config"}, {"message", "must be an object"}}})}});
  }
  if (!config_json.contains("oracle")) config_json["oracle"] = "external";

  core::SessionConfig config;
  try {
    config = core::SessionConfig::from_json(config_json);
  } catch (const core::FieldErrors& e) {
    json fields = json::array();
    for (const auto& f : e.errors()) fields.push_back({{"field", f.field}, {"message", f.message}});
    return send_error(res, 400, "invalid config", {{"fields", fields}});
  }

  std::shared_ptr<const dataset::PreparedDataset> data;
  try {
    data = open_dataset(name);
  } catch (const std::exception& e) {
    return send_error(res, 500, std::string("cannot open dataset: ") + e.what());
  }
  if (!data) return send_error(res, 404, "unknown dataset '" + name + "'");

  auto s = std::make_shared<ApiSession>();
  s->id = new_session_id();
  s->dataset = name;
  s->created_at = utc_now();
  try {
    const auto issues = config.check(data->train->size());
    if (!issues.empty()) throw core::FieldErrors(issues);
    s->session = core::Session::init(data->train, data->test, config, lof_for(name, *data, config.lof_k));
  } catch (const core::FieldErrors& e) {
    json fields = json::array();
    for (const auto& f : e.errors()) fields.push_back({{"field", f.field}, {"message", f.message}});
    return send_error(res, 400, "invalid config", {{"fields", fields}});
  } catch (const ConfigError& e) {
    return send_error(res, 400, e.what());
  }
  persist(*s);
  const auto id = s->id;
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[id] = std::move(s);
  }
  send_json(res, 201, {{"session_id", id}, {"status", "awaiting_label"}});
}

void LabelingService::handle_query(const httplib::Request& req, httplib::Response& res) {
  const auto s = find_session(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");
  std::lock_guard lock(s->mutex);
  const auto before = s->session->status();
  const bool had_pending = s->session->pending().has_value();
  const auto request = s->session->next_query();
  if (!had_pending || s->session->status() != before) persist(*s);
  if (!request) {
    return send_error(res, 409, "session stopped", {{"status", core::status_name(s->session->status())}});
  }
  send_json(res, 200, query_body(*s, *request));
}

void LabelingService::handle_label(const httplib::Request& req, httplib::Response& res) {
  const auto s = find_session(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return send_error(res, 400, "request body is not valid JSON");
  }
  json fields = json::array();
  if (!body.is_object() || !body.contains("instance_id") || !body.at("instance_id").is_number_unsigned()) {
    fields.push_back({{"field", "instance_id"}, {"message", "required non-negative integer"}});
  }
  if (!body.is_object() || !body.contains("label") || !body.at("label").is_number_integer() ||
      (body.at("label") != 0 && body.at("label") != 1)) {
    fields.push_back({{"field", "label"}, {"message", "must be 0 (normal) or 1 (attack)"}});
  }
  if (!fields.empty()) return send_error(res, 400, "invalid label", {{"fields", fields}});

  std::lock_guard lock(s->mutex);
  core::SessionUpdate update;
  try {
    update = s->session->submit_label(body.at("instance_id").get<std::size_t>(), body.at("label").get<int>());
  } catch (const core::LabelRejected& e) {
    const int status = e.reason() == core::LabelRejected::Reason::bad_label ? 400 : 409;
    return send_error(res, status, e.what(), {{"status", core::status_name(s->session->status())}});
  }
  persist(*s);
  send_json(res, 200,
            {{"status", core::status_name(update.status)},
             {"curve_point", update.point ? core::curve_point_json(*update.point) : json(nullptr)},
             {"disagreement", update.disagreement},
             {"pending_remaining", update.pending_remaining}});
}

void LabelingService::handle_curve(const httplib::Request& req, httplib::Response& res) {
  const auto s = find_session(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");
  std::lock_guard lock(s->mutex);
  json points = json::array();
  for (const auto& p : s->session->curve()) points.push_back(core::curve_point_json(p));
  send_json(res, 200, {{"session_id", s->id}, {"status", core::status_name(s->session->status())}, {"points", points}});
}

void LabelingService::handle_metrics(const httplib::Request& req, httplib::Response& res) {
  const auto s = find_session(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");
  std::lock_guard lock(s->mutex);
  send_json(res, 200, metrics_body(s->id, *s->session));
}

}  // namespace alids::service
