#include "alids/query.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "alids/error.hpp"
#include "alids/random.hpp"

namespace alids::query {

using learner::LabeledExample;
using learner::LearnerConfig;
using learner::Model;
using nlohmann::json;

namespace {

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<StrategyKind> kKinds[] = {{StrategyKind::uncertainty, "uncertainty"},
                                             {StrategyKind::qbc, "qbc"},
                                             {StrategyKind::egl, "egl"},
                                             {StrategyKind::eer, "eer"},
                                             {StrategyKind::random, "random"}};
constexpr EnumName<UncertaintyCriterion> kCriteria[] = {{UncertaintyCriterion::entropy, "entropy"},
                                                        {UncertaintyCriterion::least_confident, "least_confident"},
                                                        {UncertaintyCriterion::margin, "margin"}};
constexpr EnumName<QbcMetric> kMetrics[] = {{QbcMetric::vote_entropy, "vote_entropy"},
                                            {QbcMetric::avg_kl, "avg_kl"}};
constexpr EnumName<EerLoss> kLosses[] = {{EerLoss::zero_one, "zero_one"}, {EerLoss::log, "log"}};

template <typename Enum, std::size_t N>
const char* to_name(const EnumName<Enum> (&table)[N], Enum v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <typename Enum, std::size_t N>
Enum from_name(const EnumName<Enum> (&table)[N], const std::string& s, const char* field) {
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  throw ConfigError(std::string("strategy.") + field + ": unknown value '" + s + "'");
}

double xlog2(double p, double q) { return p == 0.0 ? 0.0 : p * std::log2(p / q); }

bool by_score(const CandidateScore& a, const CandidateScore& b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

}  // namespace

// ---------------------------------------------------------------------------
// QueryStrategy

void QueryStrategy::validate() const {
  if (density && kind == StrategyKind::random) throw ConfigError("strategy.density cannot wrap random selection");
  if (density && !(density->beta >= 0.0)) throw ConfigError("strategy.density.beta must be non-negative");
  if (eer_pool_sample == 0) throw ConfigError("strategy.eer_pool_sample must be positive");
  if (committee_size < 2) throw ConfigError("strategy.committee_size must be at least 2");
}

json QueryStrategy::to_json() const {
  json j = {{"kind", to_name(kKinds, kind)},
            {"uncertainty_criterion", to_name(kCriteria, uncertainty_criterion)},
            {"qbc_metric", to_name(kMetrics, qbc_metric)},
            {"qbc_soft", qbc_soft},
            {"committee_size", committee_size},
            {"eer_loss", to_name(kLosses, eer_loss)},
            {"eer_pool_sample", eer_pool_sample},
            {"eer_exact", eer_exact},
            {"seed", seed}};
  j["density"] = density ? json{{"beta", density->beta}, {"similarity", "cosine"}} : json(nullptr);
  return j;
}

QueryStrategy QueryStrategy::from_json(const json& j) {
  QueryStrategy s;
  try {
    if (j.is_string()) {
      s.kind = from_name(kKinds, j.get<std::string>(), "kind");
      return s;
    }
    s.kind = from_name(kKinds, j.value("kind", std::string("uncertainty")), "kind");
    s.uncertainty_criterion =
        from_name(kCriteria, j.value("uncertainty_criterion", std::string("entropy")), "uncertainty_criterion");
    s.qbc_metric = from_name(kMetrics, j.value("qbc_metric", std::string("vote_entropy")), "qbc_metric");
    s.qbc_soft = j.value("qbc_soft", false);
    s.committee_size = j.value("committee_size", s.committee_size);
    s.eer_loss = from_name(kLosses, j.value("eer_loss", std::string("log")), "eer_loss");
    s.eer_pool_sample = j.value("eer_pool_sample", s.eer_pool_sample);
    s.eer_exact = j.value("eer_exact", false);
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("density") && !j.at("density").is_null()) {
      const auto& d = j.at("density");
      if (d.value("similarity", std::string("cosine")) != "cosine") {
        throw ConfigError("strategy.density.similarity: only cosine is supported");
      }
      s.density = DensityConfig{d.value("beta", 1.0)};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("strategy: ") + e.what());
  }
  s.validate();
  return s;
}

std::string QueryStrategy::name() const {
  std::string n = to_name(kKinds, kind);
  switch (kind) {
    case StrategyKind::uncertainty: n += std::string("-") + to_name(kCriteria, uncertainty_criterion); break;
    case StrategyKind::qbc:
      n += std::string("-") + to_name(kMetrics, qbc_metric) + (qbc_soft ? "-soft" : "");
      break;
    case StrategyKind::eer: n += std::string("-") + to_name(kLosses, eer_loss); break;
    default: break;
  }
  if (density) n += "+density";
  return n;
}

// ---------------------------------------------------------------------------
// Scores

double binary_entropy(double p) {
  const double q = 1.0 - p;
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (q > 0.0) h -= q * std::log2(q);
  return h;
}

double uncertainty_score(double p, UncertaintyCriterion criterion) {
  switch (criterion) {
    case UncertaintyCriterion::entropy: return binary_entropy(p);
    case UncertaintyCriterion::least_confident: return 1.0 - std::max(p, 1.0 - p);
    case UncertaintyCriterion::margin: return -std::abs(p - (1.0 - p));
  }
  return 0.0;
}

double qbc_disagreement(std::span<const double> posteriors, QbcMetric metric, bool soft) {
  const std::size_t c = posteriors.size();
  if (c < 2) throw ConfigError("committee disagreement needs at least two members");
  double mean = 0.0;
  for (const double p : posteriors) mean += p;
  mean /= static_cast<double>(c);

  if (metric == QbcMetric::vote_entropy) {
    if (soft) return binary_entropy(mean);
    const auto votes = std::count_if(posteriors.begin(), posteriors.end(), [](double p) { return p > 0.5; });
    return binary_entropy(static_cast<double>(votes) / static_cast<double>(c));
  }

  if (std::all_of(posteriors.begin(), posteriors.end(), [&](double p) { return p == posteriors[0]; })) {
    return 0.0;
  }
  double kl = 0.0;
  for (const double p : posteriors) kl += xlog2(p, mean) + xlog2(1.0 - p, 1.0 - mean);
  return std::max(0.0, kl / static_cast<double>(c));
}

double egl_score(const Model& model, std::span<const double> x) {
  if (!model.has_gradient()) throw CapabilityError("expected gradient length needs a gradient-capable model");
  const double p = model.predict_proba(x);
  double norm2 = 1.0;
  for (const double v : x) norm2 += v * v;
  return 2.0 * p * (1.0 - p) * std::sqrt(norm2);
}

double expected_loss(const Model& model, std::span<const std::span<const double>> sample, EerLoss loss) {
  if (sample.empty()) throw ParameterError("expected loss over an empty sample");
  double total = 0.0;
  for (const auto& x : sample) {
    const double p = model.predict_proba(x);
    if (loss == EerLoss::zero_one) {
      total += 1.0 - std::max(p, 1.0 - p);
    } else {
      total -= p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(sample.size());
}

double eer_score(std::span<const LabeledExample> labeled, std::span<const std::span<const double>> pool_sample,
                 std::span<const double> candidate, double candidate_posterior, const LearnerConfig& learner,
                 EerLoss loss) {
  if (pool_sample.empty()) throw ParameterError("expected error reduction needs a non-empty pool sample");
  if (labeled.empty()) throw ParameterError("expected error reduction needs labeled data");
  std::vector<LabeledExample> augmented(labeled.begin(), labeled.end());
  augmented.push_back({candidate, 0});
  double expected = 0.0;
  for (const int y : {0, 1}) {
    const double weight = y == 1 ? candidate_posterior : 1.0 - candidate_posterior;
    if (weight == 0.0) continue;
    augmented.back().label = y;
    const auto retrained = learner::train(augmented, learner);
    expected += weight * expected_loss(retrained, pool_sample, loss);
  }
  return -expected;
}

double eer_score(const Model& model, std::span<const LabeledExample> labeled,
                 std::span<const std::span<const double>> pool_sample, std::span<const double> candidate,
                 const LearnerConfig& learner, EerLoss loss) {
  return eer_score(labeled, pool_sample, candidate, model.predict_proba(candidate), learner, loss);
}

LearnerConfig eer_learner(const LearnerConfig& base, bool exact) {
  auto c = base;
  if (!exact) {
    c.boost.rounds = std::max<std::size_t>(1, base.boost.rounds / 5);
    c.logistic.iterations = std::max<std::size_t>(1, base.logistic.iterations / 5);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Density

DensityIndex::DensityIndex(std::span<const std::span<const double>> pool) : count_(pool.size()) {
  if (pool.empty()) throw ParameterError("density weighting needs a non-empty pool");
  unit_sum_.assign(pool.front().size(), 0.0);
  for (const auto& x : pool) {
    double norm = 0.0;
    for (const double v : x) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;  // zero vectors have similarity 0 with everything
    for (std::size_t k = 0; k < x.size(); ++k) unit_sum_[k] += x[k] / norm;
  }
}

double DensityIndex::weight(std::span<const double> candidate, double beta) const {
  if (beta == 0.0) return 1.0;
  double norm = 0.0;
  double dot = 0.0;
  for (std::size_t k = 0; k < candidate.size(); ++k) {
    norm += candidate[k] * candidate[k];
    dot += candidate[k] * unit_sum_[k];
  }
  if (norm == 0.0) return 0.0;
  const double mean_similarity = std::max(0.0, dot / std::sqrt(norm) / static_cast<double>(count_));
  return std::pow(std::min(1.0, mean_similarity), beta);
}

double density_weight(std::span<const double> candidate, std::span<const std::span<const double>> pool,
                      double beta) {
  return DensityIndex(pool).weight(candidate, beta);
}

std::vector<CandidateScore> density_wrap(std::span<const CandidateScore> base, std::span<const double> weights) {
  if (base.size() != weights.size()) throw ParameterError("density_wrap: size mismatch");
  std::vector<CandidateScore> out(base.begin(), base.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].score *= weights[i];
  return out;
}

// ---------------------------------------------------------------------------
// Selection

Selection select_next(std::span<const CandidateScore> scores, std::size_t batch) {
  if (scores.empty()) throw ParameterError("select_next: empty pool");
  if (batch == 0) throw ParameterError("select_next: batch must be positive");
  Selection s;
  s.truncated = batch > scores.size();
  const std::size_t keep = std::min(batch, scores.size());
  std::vector<CandidateScore> sorted(scores.begin(), scores.end());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep), sorted.end(), by_score);
  for (std::size_t i = 0; i < keep; ++i) s.ids.push_back(sorted[i].id);
  return s;
}

Selection random_select(std::span<const std::size_t> pool_ids, std::uint64_t seed, std::size_t batch) {
  if (pool_ids.empty()) throw ParameterError("random_select: empty pool");
  if (batch == 0) throw ParameterError("random_select: batch must be positive");
  Selection s;
  s.truncated = batch > pool_ids.size();
  const std::size_t keep = std::min(batch, pool_ids.size());
  std::vector<std::size_t> ids(pool_ids.begin(), pool_ids.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(keep);
  s.ids = std::move(ids);
  return s;
}

StreamDecision stream_decide(std::span<const double> x, const Model& model, const QueryStrategy& strategy,
                             double threshold) {
  if (strategy.kind != StrategyKind::uncertainty) {
    throw ConfigError("stream selection supports the uncertainty strategy only");
  }
  const double score = uncertainty_score(model.predict_proba(x), strategy.uncertainty_criterion);
  return score >= threshold ? StreamDecision::query : StreamDecision::discard;
}

// ---------------------------------------------------------------------------
// Pool scoring

namespace {

std::vector<CandidateScore> score_eer(const QueryStrategy& strategy, const PoolContext& ctx) {
  if (ctx.model == nullptr) throw ParameterError("expected error reduction needs a trained model");
  const std::size_t n = ctx.pool_ids.size();
  const auto retrain_config = eer_learner(ctx.learner, strategy.eer_exact);

  std::vector<std::size_t> candidates(n);
  for (std::size_t i = 0; i < n; ++i) candidates[i] = i;
  std::vector<std::size_t> evaluation = candidates;
  if (!strategy.eer_exact) {
    Rng rng(derive_seed(ctx.round_seed, 0xee1));
    rng.shuffle(std::span<std::size_t>(candidates));
    candidates.resize(std::min(n, strategy.eer_pool_sample));
    std::sort(candidates.begin(), candidates.end());
    // One extra so every candidate can be excluded and still leave a full sample.
    rng.shuffle(std::span<std::size_t>(evaluation));
    evaluation.resize(std::min(n, strategy.eer_pool_sample + 1));
  }

  std::vector<CandidateScore> scores;
  scores.reserve(candidates.size());
  std::vector<std::span<const double>> sample;
  for (const std::size_t c : candidates) {
    sample.clear();
    const std::size_t limit = strategy.eer_exact ? n : std::min(strategy.eer_pool_sample, n - 1);
    for (const std::size_t e : evaluation) {
      if (e == c) continue;
      if (sample.size() == limit) break;
      sample.push_back(ctx.pool_features[e]);
    }
    if (sample.empty()) {
      // Single-instance pool: nothing left to evaluate, all candidates tie.
      scores.push_back({ctx.pool_ids[c], 0.0});
      continue;
    }
    const double score =
        eer_score(*ctx.model, ctx.labeled, sample, ctx.pool_features[c], retrain_config, strategy.eer_loss);
    scores.push_back({ctx.pool_ids[c], score});
  }
  return scores;
}

}  // namespace

std::vector<CandidateScore> score_pool(const QueryStrategy& strategy, const PoolContext& ctx) {
  if (ctx.pool_ids.size() != ctx.pool_features.size()) throw ParameterError("pool ids and features differ in size");
  if (ctx.pool_ids.empty()) throw ParameterError("cannot score an empty pool");

  std::vector<CandidateScore> scores;
  switch (strategy.kind) {
    case StrategyKind::random:
      throw ConfigError("random selection does not score candidates");
    case StrategyKind::uncertainty:
    case StrategyKind::egl:
      if (ctx.model == nullptr) throw ParameterError("strategy needs a trained model");
      if (strategy.kind == StrategyKind::egl && !ctx.model->has_gradient()) {
        throw CapabilityError("expected gradient length needs a gradient-capable learner (kind = logistic)");
      }
      for (std::size_t i = 0; i < ctx.pool_ids.size(); ++i) {
        const auto& x = ctx.pool_features[i];
        const double s = strategy.kind == StrategyKind::egl
                             ? egl_score(*ctx.model, x)
                             : uncertainty_score(ctx.model->predict_proba(x), strategy.uncertainty_criterion);
        scores.push_back({ctx.pool_ids[i], s});
      }
      break;
    case StrategyKind::qbc:
      if (ctx.committee == nullptr) throw ParameterError("query-by-committee needs a trained committee");
      for (std::size_t i = 0; i < ctx.pool_ids.size(); ++i) {
        const auto votes = ctx.committee->member_posteriors(ctx.pool_features[i]);
        scores.push_back({ctx.pool_ids[i], qbc_disagreement(votes, strategy.qbc_metric, strategy.qbc_soft)});
      }
      break;
    case StrategyKind::eer:
      scores = score_eer(strategy, ctx);
      break;
  }

  if (strategy.density) {
    const DensityIndex index(ctx.pool_features);
    // Scores follow pool order but may cover only a subsample (fast EER).
    std::vector<double> weights;
    weights.reserve(scores.size());
    std::size_t cursor = 0;
    for (const auto& s : scores) {
      while (ctx.pool_ids[cursor] != s.id) ++cursor;
      weights.push_back(index.weight(ctx.pool_features[cursor], strategy.density->beta));
    }
    scores = density_wrap(scores, weights);
  }
  return scores;
}

Selection choose(const QueryStrategy& strategy, const PoolContext& ctx, std::size_t batch) {
  if (strategy.kind == StrategyKind::random) return random_select(ctx.pool_ids, ctx.round_seed, batch);
  return select_next(score_pool(strategy, ctx), batch);
}

}  // namespace alids::query
