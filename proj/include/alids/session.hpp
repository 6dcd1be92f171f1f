#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alids/dataset.hpp"
#include "alids/error.hpp"
#include "alids/learner.hpp"
#include "alids/query.hpp"

namespace alids::core {

enum class Status { awaiting_label, running, stopped_success, stopped_budget };
enum class SeedingPolicy { lof, random };
enum class OracleKind { dataset, external };

std::string_view status_name(Status s);
bool is_stopped(Status s);

/// Exit condition: strict precision > precision_min and recall > recall_min.
struct StopRule {
  double precision_min = 0.99;
  double recall_min = 0.99;
  std::size_t label_budget = 1000;
  std::size_t max_rounds = 100000;
};

struct FieldError {
  std::string field;
  std::string message;
};

/// ConfigError that keeps per-field messages for API responses.
class FieldErrors : public ConfigError {
 public:
  explicit FieldErrors(std::vector<FieldError> errors);
  const std::vector<FieldError>& errors() const { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

struct SessionConfig {
  query::QueryStrategy strategy;
  learner::LearnerConfig learner;
  StopRule stop;
  SeedingPolicy seeding = SeedingPolicy::lof;
  std::size_t seed_count = 10;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t lof_k = 20;
  OracleKind oracle = OracleKind::dataset;

  /// Problems with this config for a pool of `pool_size` training instances.
  std::vector<FieldError> check(std::optional<std::size_t> pool_size = std::nullopt) const;
  void validate(std::optional<std::size_t> pool_size = std::nullopt) const;

  nlohmann::json to_json() const;
  /// Missing keys take defaults; throws FieldErrors.
  static SessionConfig from_json(const nlohmann::json& j);
};

struct CurvePoint {
  std::size_t round = 0;
  std::size_t labels_used = 0;
  double precision = 0.0;
  double recall = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_degenerate = false;  // no predicted positives
  bool recall_degenerate = false;     // no actual positives
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Precision/recall of the attack class at posterior > 0.5.
Metrics evaluate(const learner::Model& model, const dataset::EncodedDataset& test);

/// Budget and round caps take precedence over the metric thresholds.
Status check_stop(const StopRule& rule, const CurvePoint& latest);

struct QueryRequest {
  std::size_t round = 0;  // retrain rounds completed when the request was made
  std::vector<std::size_t> ids;
  std::vector<std::vector<double>> features;
  std::optional<std::vector<double>> posteriors;
  std::vector<double> lof_scores;

  bool operator==(const QueryRequest&) const = default;
};

struct SessionUpdate {
  Status status = Status::awaiting_label;
  std::optional<CurvePoint> point;  // set when the batch completed and the model retrained
  bool disagreement = false;        // dataset oracle overrode the submitted label
  std::size_t pending_remaining = 0;
};

class LabelRejected : public Error {
 public:
  enum class Reason { not_pending, already_labeled, bad_label, stopped };
  LabelRejected(Reason reason, const std::string& message) : Error(message), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

struct Disagreement {
  std::size_t id = 0;
  int submitted = 0;
  int truth = 0;
};

using DatasetPtr = std::shared_ptr<const dataset::EncodedDataset>;

/// One active-learning run: train, select, label, retrain until the stop rule fires.
/// Not internally synchronized; callers serialize mutations.
class Session {
 public:
  /// Throws ConfigError for empty splits or invalid config. `lof_scores`, when
  /// given, are per training instance in dataset order and skip the LOF pass.
  static Session init(DatasetPtr train, DatasetPtr test, SessionConfig config,
                      std::optional<std::vector<double>> lof_scores = std::nullopt);

  /// Pending request, computing it first if needed. nullopt once stopped.
  std::optional<QueryRequest> next_query();
  /// Throws LabelRejected without changing state.
  SessionUpdate submit_label(std::size_t id, int label);

  Status status() const { return status_; }
  const SessionConfig& config() const { return config_; }
  const std::vector<CurvePoint>& curve() const { return curve_; }
  const std::optional<learner::Model>& model() const { return model_; }
  const std::optional<QueryRequest>& pending() const { return pending_; }
  /// Ids of the pending batch that already have a label.
  const std::vector<std::size_t>& pending_answered() const { return pending_answered_; }
  const std::vector<std::pair<std::size_t, int>>& labeled() const { return labeled_; }
  const std::vector<Disagreement>& disagreements() const { return disagreements_; }
  std::size_t labels_used() const { return labeled_.size(); }
  std::size_t rounds() const { return round_; }
  std::vector<std::size_t> pool_ids() const;
  std::vector<std::size_t> training_ids() const;
  const std::vector<double>& lof_scores() const { return lof_; }
  const dataset::EncodedDataset& train_set() const { return *train_; }
  const dataset::EncodedDataset& test_set() const { return *test_; }
  /// Dataset-oracle ground truth for a training id.
  std::optional<int> truth(std::size_t id) const;

  nlohmann::json snapshot() const;
  std::string snapshot_bytes() const;
  /// Throws RestoreError on version mismatch, corruption or dataset mismatch.
  static Session restore(const nlohmann::json& snapshot, DatasetPtr train, DatasetPtr test);
  static Session restore_bytes(std::string_view bytes, DatasetPtr train, DatasetPtr test);

 private:
  Session() = default;

  void index_datasets();
  std::uint64_t round_seed() const;
  QueryRequest build_request(std::vector<std::size_t> ids) const;
  void retrain();

  DatasetPtr train_;
  DatasetPtr test_;
  SessionConfig config_;
  std::unordered_map<std::size_t, std::size_t> position_;  // train id -> position
  std::vector<char> in_pool_;                              // by position
  std::size_t pool_count_ = 0;
  std::vector<std::pair<std::size_t, int>> labeled_;       // training order
  std::vector<Disagreement> disagreements_;
  std::optional<QueryRequest> pending_;
  std::vector<std::size_t> pending_answered_;
  std::optional<learner::Model> model_;
  std::optional<learner::Committee> committee_;
  std::vector<CurvePoint> curve_;
  std::vector<double> lof_;
  std::size_t round_ = 0;
  Status status_ = Status::awaiting_label;
};

/// Answers every query from the training set's ground truth until the session stops.
void run_with_oracle(Session& session);

/// CSV `round,labels_used,precision,recall` with round-trip exact reals.
std::string curve_csv(std::span<const CurvePoint> curve);
std::vector<CurvePoint> parse_curve_csv(std::string_view text);

nlohmann::json curve_point_json(const CurvePoint& p);

/// Fingerprint of ids, features and labels, used to bind snapshots to data.
std::string dataset_fingerprint(const dataset::EncodedDataset& d);

}  // namespace alids::core
