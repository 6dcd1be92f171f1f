#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "alids/learner.hpp"

namespace alids::query {

enum class StrategyKind { uncertainty, qbc, egl, eer, random };
enum class UncertaintyCriterion { entropy, least_confident, margin };
enum class QbcMetric { vote_entropy, avg_kl };
enum class EerLoss { zero_one, log };

struct DensityConfig {
  double beta = 1.0;  // similarity is cosine
};

struct QueryStrategy {
  StrategyKind kind = StrategyKind::uncertainty;
  UncertaintyCriterion uncertainty_criterion = UncertaintyCriterion::entropy;
  QbcMetric qbc_metric = QbcMetric::vote_entropy;
  bool qbc_soft = false;
  std::size_t committee_size = 5;
  EerLoss eer_loss = EerLoss::log;
  std::size_t eer_pool_sample = 100;
  /// Exact EER: every pool instance is a candidate and an evaluation point, and
  /// retrains use the full learner configuration.
  bool eer_exact = false;
  std::optional<DensityConfig> density;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static QueryStrategy from_json(const nlohmann::json& j);
  std::string name() const;
};

struct CandidateScore {
  std::size_t id = 0;
  double score = 0.0;  // higher = query first
};

/// Binary entropy in bits with 0 log 0 = 0.
double binary_entropy(double p);

/// All criteria peak at p = 0.5.
double uncertainty_score(double posterior, UncertaintyCriterion criterion);

/// Committee disagreement in bits. `soft` switches vote entropy from hard
/// votes (posterior > 0.5) to the mean posterior; avg_kl always uses the
/// member posteriors.
double qbc_disagreement(std::span<const double> member_posteriors, QbcMetric metric, bool soft);

/// Expected gradient length 2p(1-p)||(x,1)|| for a gradient-capable model.
double egl_score(const learner::Model& model, std::span<const double> x);

/// Expected loss of `model` over `sample`, using its own posteriors as the
/// label distribution.
double expected_loss(const learner::Model& model, std::span<const std::span<const double>> sample,
                     EerLoss loss);

/// Negated expected error after labeling `candidate`:
///   -sum_y P(y | candidate) * expected_loss(retrain(labeled + (candidate, y)), sample).
/// A label whose probability is exactly zero is not retrained.
double eer_score(std::span<const learner::LabeledExample> labeled,
                 std::span<const std::span<const double>> pool_sample, std::span<const double> candidate,
                 double candidate_posterior, const learner::LearnerConfig& learner, EerLoss loss);

double eer_score(const learner::Model& model, std::span<const learner::LabeledExample> labeled,
                 std::span<const std::span<const double>> pool_sample, std::span<const double> candidate,
                 const learner::LearnerConfig& learner, EerLoss loss);

/// Learner used for EER retrains: full config in exact mode, rounds / 5
/// (at least one) otherwise.
learner::LearnerConfig eer_learner(const learner::LearnerConfig& base, bool exact);

/// Precomputes the pool's unit-vector sum so each weight costs O(d).
class DensityIndex {
 public:
  explicit DensityIndex(std::span<const std::span<const double>> pool);

  /// Mean cosine similarity to the pool, floored at 0, raised to beta.
  double weight(std::span<const double> candidate, double beta) const;

 private:
  std::vector<double> unit_sum_;
  std::size_t count_ = 0;
};

double density_weight(std::span<const double> candidate, std::span<const std::span<const double>> pool,
                      double beta);

std::vector<CandidateScore> density_wrap(std::span<const CandidateScore> base, std::span<const double> weights);

struct Selection {
  std::vector<std::size_t> ids;
  bool truncated = false;  // batch exceeded the pool
};

/// Top `batch` ids by descending score, ties to the lower id.
Selection select_next(std::span<const CandidateScore> scores, std::size_t batch);

/// Uniform sample without replacement.
Selection random_select(std::span<const std::size_t> pool_ids, std::uint64_t seed, std::size_t batch);

enum class StreamDecision { query, discard };

StreamDecision stream_decide(std::span<const double> x, const learner::Model& model,
                             const QueryStrategy& strategy, double threshold);

/// Everything a pool strategy may look at in one round.
struct PoolContext {
  std::span<const std::size_t> pool_ids;
  std::span<const std::span<const double>> pool_features;  // parallel to pool_ids
  std::span<const learner::LabeledExample> labeled;
  const learner::Model* model = nullptr;
  const learner::Committee* committee = nullptr;
  learner::LearnerConfig learner;
  std::uint64_t round_seed = 0;
};

/// Scores candidates for every non-random strategy. EER in fast mode only
/// scores a seeded subsample of the pool.
std::vector<CandidateScore> score_pool(const QueryStrategy& strategy, const PoolContext& context);

/// Picks the next batch for any strategy, random included.
Selection choose(const QueryStrategy& strategy, const PoolContext& context, std::size_t batch);

}  // namespace alids::query
