#include "alids/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "alids/outlier.hpp"
#include "alids/random.hpp"

namespace alids::core {

using learner::LabeledExample;
using nlohmann::json;

namespace {

constexpr int kSnapshotVersion = 1;
constexpr std::uint64_t kSeedingStream = 0x5eed;
constexpr std::uint64_t kCommitteeStream = 0xc033;

std::string_view seeding_name(SeedingPolicy p) { return p == SeedingPolicy::lof ? "lof" : "random"; }
std::string_view oracle_name(OracleKind k) { return k == OracleKind::dataset ? "dataset" : "external"; }

Status parse_status(const std::string& s) {
  if (s == "awaiting_label") return Status::awaiting_label;
  if (s == "running") return Status::running;
  if (s == "stopped_success") return Status::stopped_success;
  if (s == "stopped_budget") return Status::stopped_budget;
  throw RestoreError("unknown status '" + s + "'");
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json nullable_real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double real_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

// Reads an optional non-negative integer, recording a field error for anything else.
std::size_t read_count(const json& j, const char* key, std::size_t fallback, const std::string& prefix,
                       std::vector<FieldError>& errors, bool positive = true) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  const bool ok = v.is_number_unsigned() ? (!positive || v.get<std::uint64_t>() > 0)
                                         : v.is_number_integer() && v.get<std::int64_t>() >= (positive ? 1 : 0);
  if (!ok) {
    errors.push_back({prefix + key, positive ? "must be a positive integer" : "must be a non-negative integer"});
    return fallback;
  }
  return v.get<std::size_t>();
}

}  // namespace

std::string_view status_name(Status s) {
  switch (s) {
    case Status::awaiting_label: return "awaiting_label";
    case Status::running: return "running";
    case Status::stopped_success: return "stopped_success";
    case Status::stopped_budget: return "stopped_budget";
  }
  return "running";
}

bool is_stopped(Status s) { return s == Status::stopped_success || s == Status::stopped_budget; }

namespace {
std::string join_errors(const std::vector<FieldError>& errors) {
  std::string msg;
  for (const auto& e : errors) {
    if (!msg.empty()) msg += "; ";
    msg += e.field + ": " + e.message;
  }
  return msg;
}
}  // namespace

FieldErrors::FieldErrors(std::vector<FieldError> errors)
    : ConfigError(join_errors(errors)), errors_(std::move(errors)) {}

// ---------------------------------------------------------------------------
// SessionConfig

std::vector<FieldError> SessionConfig::check(std::optional<std::size_t> pool_size) const {
  std::vector<FieldError> errors;
  auto guard = [&](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back({field, e.what()});
    }
  };
  guard("strategy", [&] { strategy.validate(); });
  guard("learner", [&] { learner.validate(); });
  if (!(stop.precision_min > 0.0 && stop.precision_min <= 1.0)) {
    errors.push_back({"stop.precision_min", "must lie in (0,1]"});
  }
  if (!(stop.recall_min > 0.0 && stop.recall_min <= 1.0)) errors.push_back({"stop.recall_min", "must lie in (0,1]"});
  if (stop.label_budget == 0) errors.push_back({"stop.label_budget", "must be positive"});
  if (stop.max_rounds == 0) errors.push_back({"stop.max_rounds", "must be positive"});
  if (seed_count == 0) errors.push_back({"seed_count", "must be positive"});
  if (batch_size == 0) errors.push_back({"batch_size", "must be positive"});
  if (lof_k == 0) errors.push_back({"lof_k", "must be positive"});
  if (seed_count > stop.label_budget) errors.push_back({"seed_count", "exceeds stop.label_budget"});
  if (strategy.kind == query::StrategyKind::egl && learner.kind != learner::ModelKind::logistic) {
    errors.push_back({"strategy.kind", "egl needs learner.kind = logistic"});
  }
  if (pool_size) {
    if (seed_count > *pool_size) errors.push_back({"seed_count", "exceeds the training pool size"});
    if (stop.label_budget > *pool_size) errors.push_back({"stop.label_budget", "exceeds the training pool size"});
  }
  return errors;
}

void SessionConfig::validate(std::optional<std::size_t> pool_size) const {
  auto errors = check(pool_size);
  if (!errors.empty()) throw FieldErrors(std::move(errors));
}

json SessionConfig::to_json() const {
  return {{"strategy", strategy.to_json()},
          {"learner", learner.to_json()},
          {"stop",
           {{"precision_min", stop.precision_min},
            {"recall_min", stop.recall_min},
            {"label_budget", stop.label_budget},
            {"max_rounds", stop.max_rounds}}},
          {"seeding", seeding_name(seeding)},
          {"seed_count", seed_count},
          {"batch_size", batch_size},
          {"seed", seed},
          {"lof_k", lof_k},
          {"oracle", oracle_name(oracle)}};
}

SessionConfig SessionConfig::from_json(const json& j) {
  SessionConfig c;
  std::vector<FieldError> errors;
  if (!j.is_object()) throw FieldErrors(std::vector<FieldError>{{"config", "must be a JSON object"}});
  if (j.contains("strategy")) {
    try {
      c.strategy = query::QueryStrategy::from_json(j.at("strategy"));
    } catch (const ConfigError& e) {
      errors.push_back({"strategy", e.what()});
    }
  }
  if (j.contains("learner")) {
    try {
      c.learner = learner::LearnerConfig::from_json(j.at("learner"));
    } catch (const ConfigError& e) {
      errors.push_back({"learner", e.what()});
    }
  }
  if (j.contains("stop")) {
    const auto& s = j.at("stop");
    if (!s.is_object()) {
      errors.push_back({"stop", "must be an object"});
    } else {
      for (const char* key : {"precision_min", "recall_min"}) {
        if (!s.contains(key)) continue;
        if (!s.at(key).is_number()) {
          errors.push_back({std::string("stop.") + key, "must be a number"});
          continue;
        }
        (std::string_view(key) == "precision_min" ? c.stop.precision_min : c.stop.recall_min) = s.at(key).get<double>();
      }
      c.stop.label_budget = read_count(s, "label_budget", c.stop.label_budget, "stop.", errors);
      c.stop.max_rounds = read_count(s, "max_rounds", c.stop.max_rounds, "stop.", errors);
    }
  }
  if (j.contains("seeding")) {
    const auto& v = j.at("seeding");
    if (v == "lof") {
      c.seeding = SeedingPolicy::lof;
    } else if (v == "random") {
      c.seeding = SeedingPolicy::random;
    } else {
      errors.push_back({"seeding", "must be 'lof' or 'random'"});
    }
  }
  if (j.contains("oracle")) {
    const auto& v = j.at("oracle");
    if (v == "dataset") {
      c.oracle = OracleKind::dataset;
    } else if (v == "external") {
      c.oracle = OracleKind::external;
    } else {
      errors.push_back({"oracle", "must be 'dataset' or 'external'"});
    }
  }
  c.seed_count = read_count(j, "seed_count", c.seed_count, "", errors);
  c.batch_size = read_count(j, "batch_size", c.batch_size, "", errors);
  c.lof_k = read_count(j, "lof_k", c.lof_k, "", errors);
  c.seed = read_count(j, "seed", 0, "", errors, false);
  if (errors.empty()) {
    auto more = c.check();
    errors.insert(errors.end(), more.begin(), more.end());
  }
  if (!errors.empty()) throw FieldErrors(std::move(errors));
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation and stopping

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  if (tp + fp == 0) {
    m.precision_degenerate = true;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall_degenerate = true;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  return m;
}

Metrics evaluate(const learner::Model& model, const dataset::EncodedDataset& test) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& inst : test.instances) {
    if (!inst.label) throw ConfigError("evaluate: test instance " + std::to_string(inst.id) + " has no label");
    const bool predicted = model.predict_proba(inst.features) > 0.5;
    const bool actual = *inst.label == 1;
    if (predicted && actual) ++tp;
    if (predicted && !actual) ++fp;
    if (!predicted && actual) ++fn;
  }
  return metrics_from_counts(tp, fp, fn);
}

Status check_stop(const StopRule& rule, const CurvePoint& latest) {
  if (latest.labels_used >= rule.label_budget || latest.round >= rule.max_rounds) return Status::stopped_budget;
  if (latest.precision > rule.precision_min && latest.recall > rule.recall_min) return Status::stopped_success;
  return Status::running;
}

// ---------------------------------------------------------------------------
// Session

std::string dataset_fingerprint(const dataset::EncodedDataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& inst : d.instances) {
    const std::uint64_t id = inst.id;
    mix(&id, sizeof id);
    mix(inst.features.data(), inst.features.size() * sizeof(double));
    const int label = inst.label.value_or(-1);
    mix(&label, sizeof label);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void Session::index_datasets() {
  position_.clear();
  position_.reserve(train_->size());
  for (std::size_t i = 0; i < train_->size(); ++i) {
    if (!position_.emplace(train_->instances[i].id, i).second) {
      throw ConfigError("training set has duplicate id " + std::to_string(train_->instances[i].id));
    }
  }
}

Session Session::init(DatasetPtr train, DatasetPtr test, SessionConfig config,
                      std::optional<std::vector<double>> lof_scores) {
  if (!train || train->empty()) throw ConfigError("training set is empty");
  if (!test || test->empty()) throw ConfigError("test set is empty");
  if (train->feature_count() != test->feature_count() ||
      train->encoding_map.to_json() != test->encoding_map.to_json()) {
    throw ConfigError("training and test sets use different encodings");
  }
  for (const auto& inst : test->instances) {
    if (!inst.label) throw ConfigError("test instance " + std::to_string(inst.id) + " has no label");
  }
  if (config.oracle == OracleKind::dataset) {
    for (const auto& inst : train->instances) {
      if (!inst.label) throw ConfigError("dataset oracle: training instance " + std::to_string(inst.id) + " has no label");
    }
  }
  config.validate(train->size());

  Session s;
  s.train_ = std::move(train);
  s.test_ = std::move(test);
  s.config_ = std::move(config);
  s.index_datasets();
  const std::size_t n = s.train_->size();
  s.in_pool_.assign(n, 1);
  s.pool_count_ = n;

  if (lof_scores) {
    if (lof_scores->size() != n) throw ConfigError("precomputed LOF scores do not match the training set");
    s.lof_ = std::move(*lof_scores);
  } else if (n >= 2) {
    std::vector<outlier::Point> points;
    points.reserve(n);
    for (const auto& inst : s.train_->instances) points.push_back(inst.features);
    const auto scores = outlier::lof_scores(points, {outlier::effective_k(s.config_.lof_k, n)});
    s.lof_.resize(n);
    for (const auto& sc : scores) s.lof_[sc.id] = sc.score;
  } else {
    s.lof_.assign(n, 1.0);
  }

  std::vector<std::size_t> ids;
  ids.reserve(n);
  for (const auto& inst : s.train_->instances) ids.push_back(inst.id);
  std::vector<std::size_t> seeds;
  if (s.config_.seeding == SeedingPolicy::lof) {
    std::vector<outlier::LofScore> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = {ids[i], s.lof_[i]};
    seeds = outlier::rank_pool(scores, 1.0);
    seeds.resize(s.config_.seed_count);
  } else {
    seeds = query::random_select(ids, derive_seed(s.config_.seed, kSeedingStream), s.config_.seed_count).ids;
  }
  s.pending_ = s.build_request(std::move(seeds));
  s.status_ = Status::awaiting_label;
  return s;
}

std::uint64_t Session::round_seed() const {
  return derive_seed(config_.seed ^ mix_seed(config_.strategy.seed), round_);
}

std::optional<int> Session::truth(std::size_t id) const {
  const auto it = position_.find(id);
  if (it == position_.end()) return std::nullopt;
  return train_->instances[it->second].label;
}

std::vector<std::size_t> Session::pool_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(pool_count_);
  for (std::size_t i = 0; i < in_pool_.size(); ++i) {
    if (in_pool_[i]) ids.push_back(train_->instances[i].id);
  }
  return ids;
}

std::vector<std::size_t> Session::training_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(train_->size());
  for (const auto& inst : train_->instances) ids.push_back(inst.id);
  return ids;
}

QueryRequest Session::build_request(std::vector<std::size_t> ids) const {
  QueryRequest r;
  r.round = round_;
  for (const auto id : ids) {
    const auto& inst = train_->instances[position_.at(id)];
    r.features.push_back(inst.features);
    r.lof_scores.push_back(lof_[position_.at(id)]);
  }
  if (model_) {
    std::vector<double> posteriors;
    for (const auto& f : r.features) posteriors.push_back(model_->predict_proba(f));
    r.posteriors = std::move(posteriors);
  }
  r.ids = std::move(ids);
  return r;
}

std::optional<QueryRequest> Session::next_query() {
  if (is_stopped(status_)) return std::nullopt;
  if (pending_) return pending_;
  if (pool_count_ == 0 || labels_used() >= config_.stop.label_budget) {
    status_ = Status::stopped_budget;
    return std::nullopt;
  }
  const std::size_t batch = std::min(config_.batch_size, config_.stop.label_budget - labels_used());

  std::vector<std::size_t> ids;
  std::vector<std::span<const double>> features;
  ids.reserve(pool_count_);
  features.reserve(pool_count_);
  for (std::size_t i = 0; i < in_pool_.size(); ++i) {
    if (!in_pool_[i]) continue;
    ids.push_back(train_->instances[i].id);
    features.emplace_back(train_->instances[i].features);
  }
  std::vector<LabeledExample> examples;
  examples.reserve(labeled_.size());
  for (const auto& [id, label] : labeled_) examples.push_back({train_->instances[position_.at(id)].features, label});

  query::PoolContext ctx;
  ctx.pool_ids = ids;
  ctx.pool_features = features;
  ctx.labeled = examples;
  ctx.model = model_ ? &*model_ : nullptr;
  ctx.committee = committee_ ? &*committee_ : nullptr;
  ctx.learner = config_.learner;
  ctx.round_seed = round_seed();
  auto selection = query::choose(config_.strategy, ctx, batch);
  pending_ = build_request(std::move(selection.ids));
  status_ = Status::awaiting_label;
  return pending_;
}

SessionUpdate Session::submit_label(std::size_t id, int label) {
  using Reason = LabelRejected::Reason;
  if (is_stopped(status_)) {
    throw LabelRejected(Reason::stopped, "session is " + std::string(status_name(status_)));
  }
  if (label != 0 && label != 1) throw LabelRejected(Reason::bad_label, "label must be 0 or 1");
  const auto it = position_.find(id);
  if (it == position_.end()) throw LabelRejected(Reason::not_pending, "unknown instance " + std::to_string(id));
  if (!in_pool_[it->second]) {
    throw LabelRejected(Reason::already_labeled, "instance " + std::to_string(id) + " is already labeled");
  }
  if (!pending_ || std::find(pending_->ids.begin(), pending_->ids.end(), id) == pending_->ids.end()) {
    throw LabelRejected(Reason::not_pending, "instance " + std::to_string(id) + " is not pending");
  }

  SessionUpdate update;
  int training_label = label;
  if (config_.oracle == OracleKind::dataset) {
    const int truth = *train_->instances[it->second].label;
    if (truth != label) {
      disagreements_.push_back({id, label, truth});
      update.disagreement = true;
    }
    training_label = truth;
  }
  in_pool_[it->second] = 0;
  --pool_count_;
  labeled_.emplace_back(id, training_label);
  pending_answered_.push_back(id);

  update.pending_remaining = pending_->ids.size() - pending_answered_.size();
  if (update.pending_remaining == 0) {
    // Training order follows the request, not the order answers arrived in.
    const std::size_t k = pending_->ids.size();
    const auto batch_begin = labeled_.end() - static_cast<std::ptrdiff_t>(k);
    std::vector<std::pair<std::size_t, int>> batch(batch_begin, labeled_.end());
    for (std::size_t i = 0; i < k; ++i) {
      const auto id_i = pending_->ids[i];
      *(batch_begin + static_cast<std::ptrdiff_t>(i)) =
          *std::find_if(batch.begin(), batch.end(), [&](const auto& p) { return p.first == id_i; });
    }
    pending_.reset();
    pending_answered_.clear();
    retrain();
    update.point = curve_.back();
    status_ = check_stop(config_.stop, curve_.back());
  }
  update.status = status_;
  return update;
}

void Session::retrain() {
  std::vector<LabeledExample> examples;
  examples.reserve(labeled_.size());
  for (const auto& [id, label] : labeled_) examples.push_back({train_->instances[position_.at(id)].features, label});
  model_ = learner::train(examples, config_.learner);
  if (config_.strategy.kind == query::StrategyKind::qbc) {
    committee_ = learner::train_committee(examples, config_.strategy.committee_size, config_.learner,
                                          derive_seed(config_.seed, kCommitteeStream + round_));
  }
  const auto m = evaluate(*model_, *test_);
  ++round_;
  curve_.push_back({round_, labeled_.size(), m.precision, m.recall});
}

// ---------------------------------------------------------------------------
// Snapshots

json Session::snapshot() const {
  json labeled = json::array();
  for (const auto& [id, label] : labeled_) labeled.push_back({id, label});
  json disagreements = json::array();
  for (const auto& d : disagreements_) {
    disagreements.push_back({{"id", d.id}, {"submitted", d.submitted}, {"truth", d.truth}});
  }
  json curve = json::array();
  for (const auto& p : curve_) curve.push_back(curve_point_json(p));
  json lof = json::array();
  for (const double v : lof_) lof.push_back(nullable_real(v));

  json j = {{"format", "alids.session"},
            {"version", kSnapshotVersion},
            {"config", config_.to_json()},
            {"train_fingerprint", dataset_fingerprint(*train_)},
            {"test_fingerprint", dataset_fingerprint(*test_)},
            {"status", status_name(status_)},
            {"round", round_},
            {"labeled", labeled},
            {"disagreements", disagreements},
            {"curve", curve},
            {"lof", lof}};
  j["pending"] = pending_ ? json{{"round", pending_->round}, {"ids", pending_->ids}, {"answered", pending_answered_}}
                          : json(nullptr);
  j["model"] = model_ ? model_->to_json() : json(nullptr);
  if (committee_) {
    json members = json::array();
    for (const auto& m : committee_->members) members.push_back(m.to_json());
    j["committee"] = {{"members", members}, {"seeds", committee_->seeds}};
  } else {
    j["committee"] = nullptr;
  }
  return j;
}

std::string Session::snapshot_bytes() const { return snapshot().dump(); }

Session Session::restore_bytes(std::string_view bytes, DatasetPtr train, DatasetPtr test) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw RestoreError(std::string("session snapshot is not valid JSON: ") + e.what());
  }
  return restore(j, std::move(train), std::move(test));
}

Session Session::restore(const json& j, DatasetPtr train, DatasetPtr test) {
  if (!train || !test) throw RestoreError("restore needs the training and test sets");
  try {
    if (j.at("format").get<std::string>() != "alids.session") throw RestoreError("not a session snapshot");
    if (j.at("version").get<int>() != kSnapshotVersion) {
      throw RestoreError("unsupported snapshot version " + std::to_string(j.at("version").get<int>()));
    }
    if (j.at("train_fingerprint").get<std::string>() != dataset_fingerprint(*train) ||
        j.at("test_fingerprint").get<std::string>() != dataset_fingerprint(*test)) {
      throw RestoreError("snapshot was taken against different data");
    }
    Session s;
    s.train_ = std::move(train);
    s.test_ = std::move(test);
    try {
      s.config_ = SessionConfig::from_json(j.at("config"));
    } catch (const ConfigError& e) {
      throw RestoreError(std::string("snapshot config: ") + e.what());
    }
    s.index_datasets();
    const std::size_t n = s.train_->size();
    s.in_pool_.assign(n, 1);
    s.pool_count_ = n;
    s.status_ = parse_status(j.at("status").get<std::string>());
    s.round_ = j.at("round").get<std::size_t>();

    for (const auto& e : j.at("labeled")) {
      const auto id = e.at(0).get<std::size_t>();
      const int label = e.at(1).get<int>();
      const auto it = s.position_.find(id);
      if (it == s.position_.end() || !s.in_pool_[it->second] || (label != 0 && label != 1)) {
        throw RestoreError("snapshot labeled set is inconsistent at id " + std::to_string(id));
      }
      s.in_pool_[it->second] = 0;
      --s.pool_count_;
      s.labeled_.emplace_back(id, label);
    }
    for (const auto& d : j.at("disagreements")) {
      s.disagreements_.push_back({d.at("id").get<std::size_t>(), d.at("submitted").get<int>(), d.at("truth").get<int>()});
    }
    std::size_t previous = 0;
    for (const auto& p : j.at("curve")) {
      CurvePoint c{p.at("round").get<std::size_t>(), p.at("labels_used").get<std::size_t>(),
                   p.at("precision").get<double>(), p.at("recall").get<double>()};
      if (c.labels_used <= previous && !s.curve_.empty()) throw RestoreError("snapshot curve is not increasing");
      previous = c.labels_used;
      s.curve_.push_back(c);
    }
    if (s.curve_.size() != s.round_) throw RestoreError("snapshot curve length disagrees with round count");

    const auto& lof = j.at("lof");
    if (lof.size() != n) throw RestoreError("snapshot LOF scores do not match the training set");
    for (const auto& v : lof) s.lof_.push_back(real_or_inf(v));

    if (!j.at("model").is_null()) s.model_ = learner::Model::from_json(j.at("model"));
    if (!j.at("committee").is_null()) {
      learner::Committee c;
      for (const auto& m : j.at("committee").at("members")) c.members.push_back(learner::Model::from_json(m));
      c.seeds = j.at("committee").at("seeds").get<std::vector<std::uint64_t>>();
      s.committee_ = std::move(c);
    }
    if (!j.at("pending").is_null()) {
      const auto& p = j.at("pending");
      auto ids = p.at("ids").get<std::vector<std::size_t>>();
      for (const auto id : ids) {
        if (!s.position_.count(id)) throw RestoreError("snapshot pending id " + std::to_string(id) + " is unknown");
      }
      s.pending_answered_ = p.at("answered").get<std::vector<std::size_t>>();
      for (const auto id : s.pending_answered_) {
        if (std::find(ids.begin(), ids.end(), id) == ids.end() || s.in_pool_[s.position_.at(id)]) {
          throw RestoreError("snapshot pending answers are inconsistent");
        }
      }
      for (const auto id : ids) {
        const bool answered =
            std::find(s.pending_answered_.begin(), s.pending_answered_.end(), id) != s.pending_answered_.end();
        if (!answered && !s.in_pool_[s.position_.at(id)]) throw RestoreError("snapshot pending id already labeled");
      }
      s.pending_ = s.build_request(std::move(ids));
      s.pending_->round = p.at("round").get<std::size_t>();
    }
    return s;
  } catch (const json::exception& e) {
    throw RestoreError(std::string("corrupted session snapshot: ") + e.what());
  } catch (const ConfigError& e) {
    throw RestoreError(std::string("corrupted session snapshot: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void run_with_oracle(Session& session) {
  if (session.config().oracle != OracleKind::dataset) {
    throw ConfigError("run_with_oracle needs a session with the dataset oracle");
  }
  while (!is_stopped(session.status())) {
    const auto request = session.next_query();
    if (!request) break;
    const auto& answered = session.pending_answered();
    for (const auto id : request->ids) {
      if (std::find(answered.begin(), answered.end(), id) != answered.end()) continue;
      session.submit_label(id, *session.truth(id));
    }
  }
}

json curve_point_json(const CurvePoint& p) {
  return {{"round", p.round}, {"labels_used", p.labels_used}, {"precision", p.precision}, {"recall", p.recall}};
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::string out = "round,labels_used,precision,recall\n";
  for (const auto& p : curve) {
    out += std::to_string(p.round) + "," + std::to_string(p.labels_used) + "," + format_real(p.precision) + "," +
           format_real(p.recall) + "\n";
  }
  return out;
}

std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
  std::vector<CurvePoint> out;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "round,labels_used,precision,recall") {
    throw DatasetError("curve CSV: missing header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    unsigned long long round = 0, used = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%lf,%lf", &round, &used, &p.precision, &p.recall) != 4) {
      throw DatasetError("curve CSV: malformed line '" + line + "'");
    }
    p.round = round;
    p.labels_used = used;
    out.push_back(p);
  }
  return out;
}

}  // namespace alids::core
