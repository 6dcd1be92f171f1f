#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace alids::learner {

/// Second-order gradient boosting on logistic loss.
struct BoostConfig {
  std::size_t rounds = 50;
  double learning_rate = 0.3;
  std::size_t max_depth = 4;
  double min_child_weight = 1.0;
  double l2_lambda = 1.0;
  double base_score = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const BoostConfig&) const = default;
};

/// L2-regularized logistic regression fitted by full-batch gradient descent.
struct LogisticConfig {
  std::size_t iterations = 300;
  double step_size = 1.0;
  double l2_lambda = 1e-3;

  void validate() const;
};

enum class ModelKind { boosted_trees, logistic };

struct LearnerConfig {
  ModelKind kind = ModelKind::boosted_trees;
  BoostConfig boost;
  LogisticConfig logistic;

  void validate() const;
  nlohmann::json to_json() const;
  static LearnerConfig from_json(const nlohmann::json& j);
};

/// Flat regression tree. A node is a leaf when `feature < 0`.
/// Samples with value < threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf output, already scaled by the learning rate

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double evaluate(std::span<const double> x) const;
  bool operator==(const Tree&) const = default;
};

class Model {
 public:
  static Model boosted(std::size_t dimension, const BoostConfig& config, std::vector<Tree> trees);
  static Model logistic(std::vector<double> weights, double bias);

  ModelKind kind() const { return kind_; }
  bool has_gradient() const { return kind_ == ModelKind::logistic; }
  std::size_t dimension() const { return dimension_; }

  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  const BoostConfig& boost_config() const { return boost_; }

  /// Raw additive score before the sigmoid.
  double margin(std::span<const double> x) const;
  /// Attack posterior, always strictly inside (0,1).
  double predict_proba(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

  friend bool operator==(const Model&, const Model&) = default;

 private:
  ModelKind kind_ = ModelKind::logistic;
  std::size_t dimension_ = 0;
  BoostConfig boost_;
  std::vector<Tree> trees_;
  std::vector<double> weights_;
  double bias_ = 0.0;

  void check_dimension(std::span<const double> x) const;
};

struct LabeledExample {
  std::span<const double> features;
  int label = 0;
};

double sigmoid(double margin);
double logit(double p);

Model train_boosted(std::span<const LabeledExample> labeled, const BoostConfig& config);
Model train_logistic(std::span<const LabeledExample> labeled, std::size_t dimension,
                     const LogisticConfig& config);
/// Dispatches on `config.kind`. Throws TrainingError on an empty set.
Model train(std::span<const LabeledExample> labeled, const LearnerConfig& config);

/// Gradient of the log-loss w.r.t. (weights..., bias): (p - y) * (x, 1).
/// Throws CapabilityError for models without an analytic gradient.
std::vector<double> loss_gradient(const Model& model, std::span<const double> x, int label);

struct Committee {
  std::vector<Model> members;
  std::vector<std::uint64_t> seeds;

  std::vector<double> member_posteriors(std::span<const double> x) const;
};

/// Bagged committee: member i trains on a same-size bootstrap drawn with seed ^ i.
Committee train_committee(std::span<const LabeledExample> labeled, std::size_t size,
                          const LearnerConfig& config, std::uint64_t seed);

/// Mean log-loss of `model` over `labeled`.
double log_loss(const Model& model, std::span<const LabeledExample> labeled);

}  // namespace alids::learner
