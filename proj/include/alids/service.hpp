#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "alids/error.hpp"
#include "alids/prepared.hpp"
#include "alids/session.hpp"

namespace httplib {
class Server;
class Request;
class Response;
}  // namespace httplib

namespace alids::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  std::filesystem::path data_dir = "data";          // prepared datasets, one directory each
  std::filesystem::path snapshot_dir = "sessions";  // one JSON file per session
  std::optional<std::filesystem::path> ui_dir;      // static labeling console, mounted at /
};

/// Listen address could not be bound.
class BindError : public Error {
 public:
  using Error::Error;
};

/// HTTP/JSON facade over core::Session for the human labeler.
///
/// Sessions are independent: each carries its own mutex, so retraining one
/// session never blocks requests against another. Every state change is
/// written to the snapshot directory before the response is sent.
class LabelingService {
 public:
  explicit LabelingService(ServiceConfig config);
  ~LabelingService();

  LabelingService(const LabelingService&) = delete;
  LabelingService& operator=(const LabelingService&) = delete;

  /// Restores sessions found in the snapshot directory; returns how many.
  std::size_t load_snapshots();

  /// Binds the listen address and returns the bound port. Throws BindError.
  int bind();
  /// Serves until stop(). bind() must have succeeded.
  void run();
  /// bind() + run() on a background thread.
  int start();
  /// Stops serving and snapshots every session.
  void stop();
  void snapshot_all();

  int port() const { return port_; }
  std::size_t session_count() const;

 private:
  struct ApiSession {
    std::mutex mutex;
    std::string id;
    std::string dataset;
    std::string created_at;
    std::optional<core::Session> session;
  };

  void install_routes();
  std::shared_ptr<const dataset::PreparedDataset> open_dataset(const std::string& name);
  std::shared_ptr<ApiSession> find_session(const std::string& id) const;
  std::vector<double> lof_for(const std::string& dataset, const dataset::PreparedDataset& data, std::size_t k);
  void persist(const ApiSession& s) const;
  nlohmann::json query_body(const ApiSession& s, const core::QueryRequest& request) const;

  void handle_create(const httplib::Request& req, httplib::Response& res);
  void handle_query(const httplib::Request& req, httplib::Response& res);
  void handle_label(const httplib::Request& req, httplib::Response& res);
  void handle_curve(const httplib::Request& req, httplib::Response& res);
  void handle_metrics(const httplib::Request& req, httplib::Response& res);

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions_;

  std::mutex datasets_mutex_;
  std::map<std::string, std::shared_ptr<const dataset::PreparedDataset>> datasets_;
  std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const std::vector<double>>> lof_cache_;
};

}  // namespace alids::service
