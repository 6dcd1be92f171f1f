#include "alids/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "alids/error.hpp"
#include "alids/random.hpp"

namespace alids::learner {

using nlohmann::json;

namespace {

// Margins beyond this saturate the sigmoid to exactly 0 or 1 in double.
constexpr double kMarginClamp = 30.0;
// Minimum loss reduction for a split to be kept.
constexpr double kMinGain = 1e-6;

std::size_t checked_dimension(std::span<const LabeledExample> labeled) {
  if (labeled.empty()) throw TrainingError("cannot train on an empty labeled set");
  const std::size_t d = labeled.front().features.size();
  for (const auto& ex : labeled) {
    if (ex.features.size() != d) throw TrainingError("labeled instances differ in dimensionality");
    if (ex.label != 0 && ex.label != 1) throw TrainingError("labels must be 0 or 1");
  }
  return d;
}

// Exact greedy tree growth over presorted feature columns, one level at a time.
class TreeBuilder {
 public:
  TreeBuilder(std::span<const LabeledExample> data, const BoostConfig& config,
              const std::vector<std::vector<std::uint32_t>>& sorted)
      : data_(data), config_(config), sorted_(sorted) {}

  Tree build(std::span<const double> grad, std::span<const double> hess) {
    const std::size_t n = data_.size();
    Tree tree;
    tree.nodes.push_back({});
    std::vector<NodeStats> stats(1);
    for (std::size_t i = 0; i < n; ++i) {
      stats[0].g += grad[i];
      stats[0].h += hess[i];
    }
    node_of_.assign(n, 0);

    std::vector<int> frontier{0};
    for (std::size_t depth = 0; depth < config_.max_depth && !frontier.empty(); ++depth) {
      // Per-node best split for this level.
      std::vector<Split> best(tree.nodes.size());
      std::vector<char> open(tree.nodes.size(), 0);
      for (const int node : frontier) open[static_cast<std::size_t>(node)] = 1;

      std::vector<ScanState> scan(tree.nodes.size());
      const std::size_t d = sorted_.size();
      for (std::size_t f = 0; f < d; ++f) {
        for (const int node : frontier) scan[static_cast<std::size_t>(node)] = {};
        for (const std::uint32_t i : sorted_[f]) {
          const auto node = static_cast<std::size_t>(node_of_[i]);
          if (node_of_[i] < 0 || !open[node]) continue;
          auto& s = scan[node];
          const double v = data_[i].features[f];
          if (s.started && v > s.last) consider(f, s, stats[node], v, best[node]);
          s.g += grad[i];
          s.h += hess[i];
          s.last = v;
          s.started = true;
        }
      }

      std::vector<int> next;
      for (const int node : frontier) {
        const auto& b = best[static_cast<std::size_t>(node)];
        if (!b.valid) continue;
        const int left = static_cast<int>(tree.nodes.size());
        const int right = left + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        stats.push_back({b.gl, b.hl});
        stats.push_back({stats[static_cast<std::size_t>(node)].g - b.gl,
                         stats[static_cast<std::size_t>(node)].h - b.hl});
        auto& parent = tree.nodes[static_cast<std::size_t>(node)];
        parent.feature = static_cast<int>(b.feature);
        parent.threshold = b.threshold;
        parent.left = left;
        parent.right = right;
        next.push_back(left);
        next.push_back(right);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const int node = node_of_[i];
        if (node < 0) continue;
        const auto& tn = tree.nodes[static_cast<std::size_t>(node)];
        if (tn.feature < 0) continue;
        node_of_[i] = data_[i].features[static_cast<std::size_t>(tn.feature)] < tn.threshold ? tn.left : tn.right;
      }
      frontier = std::move(next);
    }

    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      auto& node = tree.nodes[k];
      if (node.feature >= 0) continue;
      node.weight = config_.learning_rate * (-stats[k].g / (stats[k].h + config_.l2_lambda));
    }
    return tree;
  }

 private:
  struct NodeStats {
    double g = 0.0;
    double h = 0.0;
  };
  struct ScanState {
    double g = 0.0;
    double h = 0.0;
    double last = 0.0;
    bool started = false;
  };
  struct Split {
    bool valid = false;
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gl = 0.0;
    double hl = 0.0;
  };

  double score(double g, double h) const { return g * g / (h + config_.l2_lambda); }

  void consider(std::size_t feature, const ScanState& left, const NodeStats& total, double value,
                Split& best) const {
    const double gr = total.g - left.g;
    const double hr = total.h - left.h;
    if (left.h < config_.min_child_weight || hr < config_.min_child_weight) return;
    const double gain = 0.5 * (score(left.g, left.h) + score(gr, hr) - score(total.g, total.h));
    if (gain <= kMinGain || (best.valid && gain <= best.gain)) return;
    double threshold = left.last + (value - left.last) / 2.0;
    if (!(threshold > left.last)) threshold = value;
    best = {true, gain, feature, threshold, left.g, left.h};
  }

  std::span<const LabeledExample> data_;
  const BoostConfig& config_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  std::vector<int> node_of_;
};

std::string kind_name(ModelKind kind) {
  return kind == ModelKind::boosted_trees ? "boosted_trees" : "logistic";
}

ModelKind parse_kind(const std::string& s) {
  if (s == "boosted_trees") return ModelKind::boosted_trees;
  if (s == "logistic") return ModelKind::logistic;
  throw ConfigError("unknown learner kind '" + s + "'");
}

json boost_to_json(const BoostConfig& c) {
  return {{"rounds", c.rounds},           {"learning_rate", c.learning_rate},
          {"max_depth", c.max_depth},     {"min_child_weight", c.min_child_weight},
          {"l2_lambda", c.l2_lambda},     {"base_score", c.base_score},
          {"seed", c.seed}};
}

BoostConfig boost_from_json(const json& j) {
  BoostConfig c;
  c.rounds = j.value("rounds", c.rounds);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
  c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
  c.base_score = j.value("base_score", c.base_score);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs

void BoostConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("boost.learning_rate must lie in (0,1]");
  if (max_depth == 0) throw ConfigError("boost.max_depth must be positive");
  if (!(min_child_weight >= 0.0)) throw ConfigError("boost.min_child_weight must be non-negative");
  if (!(l2_lambda >= 0.0)) throw ConfigError("boost.l2_lambda must be non-negative");
  if (!(base_score > 0.0 && base_score < 1.0)) throw ConfigError("boost.base_score must lie in (0,1)");
}

void LogisticConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("logistic.step_size must be positive");
  if (!(l2_lambda >= 0.0)) throw ConfigError("logistic.l2_lambda must be non-negative");
}

void LearnerConfig::validate() const {
  boost.validate();
  logistic.validate();
}

json LearnerConfig::to_json() const {
  return {{"kind", kind_name(kind)},
          {"boost", boost_to_json(boost)},
          {"logistic",
           {{"iterations", logistic.iterations},
            {"step_size", logistic.step_size},
            {"l2_lambda", logistic.l2_lambda}}}};
}

LearnerConfig LearnerConfig::from_json(const json& j) {
  LearnerConfig c;
  try {
    c.kind = parse_kind(j.value("kind", std::string("boosted_trees")));
    if (j.contains("boost")) c.boost = boost_from_json(j.at("boost"));
    if (j.contains("logistic")) {
      const auto& l = j.at("logistic");
      c.logistic.iterations = l.value("iterations", c.logistic.iterations);
      c.logistic.step_size = l.value("step_size", c.logistic.step_size);
      c.logistic.l2_lambda = l.value("l2_lambda", c.logistic.l2_lambda);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("learner: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

double sigmoid(double margin) {
  const double m = std::clamp(margin, -kMarginClamp, kMarginClamp);
  return 1.0 / (1.0 + std::exp(-m));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double Tree::evaluate(std::span<const double> x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const auto& n = nodes[k];
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[k].weight;
}

Model Model::boosted(std::size_t dimension, const BoostConfig& config, std::vector<Tree> trees) {
  Model m;
  m.kind_ = ModelKind::boosted_trees;
  m.dimension_ = dimension;
  m.boost_ = config;
  m.trees_ = std::move(trees);
  return m;
}

Model Model::logistic(std::vector<double> weights, double bias) {
  Model m;
  m.kind_ = ModelKind::logistic;
  m.dimension_ = weights.size();
  m.weights_ = std::move(weights);
  m.bias_ = bias;
  return m;
}

void Model::check_dimension(std::span<const double> x) const {
  if (x.size() != dimension_) {
    throw ParameterError("model expects " + std::to_string(dimension_) + " features, got " +
                         std::to_string(x.size()));
  }
}

double Model::margin(std::span<const double> x) const {
  check_dimension(x);
  if (kind_ == ModelKind::logistic) {
    double s = bias_;
    for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * x[i];
    return s;
  }
  double s = logit(boost_.base_score);
  for (const auto& t : trees_) s += t.evaluate(x);
  return s;
}

double Model::predict_proba(std::span<const double> x) const { return sigmoid(margin(x)); }

json Model::to_json() const {
  json j = {{"kind", kind_name(kind_)}, {"dimension", dimension_}};
  if (kind_ == ModelKind::logistic) {
    j["weights"] = weights_;
    j["bias"] = bias_;
    return j;
  }
  j["config"] = boost_to_json(boost_);
  json trees = json::array();
  for (const auto& t : trees_) {
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         weight = json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      weight.push_back(n.weight);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                     {"weight", weight}});
  }
  j["trees"] = std::move(trees);
  return j;
}

Model Model::from_json(const json& j) {
  try {
    const auto kind = parse_kind(j.at("kind").get<std::string>());
    if (kind == ModelKind::logistic) {
      auto m = logistic(j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>());
      if (m.dimension_ != j.at("dimension").get<std::size_t>()) throw ConfigError("model: dimension mismatch");
      return m;
    }
    const auto dimension = j.at("dimension").get<std::size_t>();
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<int>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<int>>();
      const auto right = t.at("right").get<std::vector<int>>();
      const auto weight = t.at("weight").get<std::vector<double>>();
      const std::size_t n = feature.size();
      if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || weight.size() != n) {
        throw ConfigError("model: malformed tree arrays");
      }
      Tree tree;
      for (std::size_t k = 0; k < n; ++k) {
        const bool split = feature[k] >= 0;
        if (split && (static_cast<std::size_t>(feature[k]) >= dimension || left[k] <= static_cast<int>(k) ||
                      right[k] <= static_cast<int>(k) || left[k] >= static_cast<int>(n) ||
                      right[k] >= static_cast<int>(n))) {
          throw ConfigError("model: tree node " + std::to_string(k) + " is malformed");
        }
        tree.nodes.push_back({feature[k], threshold[k], left[k], right[k], weight[k]});
      }
      trees.push_back(std::move(tree));
    }
    auto config = boost_from_json(j.at("config"));
    config.validate();
    return boosted(dimension, config, std::move(trees));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

Model train_boosted(std::span<const LabeledExample> labeled, const BoostConfig& config) {
  config.validate();
  const std::size_t d = checked_dimension(labeled);
  const std::size_t n = labeled.size();

  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& order = sorted[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return labeled[a].features[f] < labeled[b].features[f];
    });
  }

  std::vector<double> margin(n, logit(config.base_score));
  std::vector<double> grad(n), hess(n);
  std::vector<Tree> trees;
  trees.reserve(config.rounds);
  TreeBuilder builder(labeled, config, sorted);
  for (std::size_t round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - labeled[i].label;
      hess[i] = p * (1.0 - p);
    }
    auto tree = builder.build(grad, hess);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.evaluate(labeled[i].features);
    trees.push_back(std::move(tree));
  }
  return Model::boosted(d, config, std::move(trees));
}

Model train_logistic(std::span<const LabeledExample> labeled, std::size_t dimension,
                     const LogisticConfig& config) {
  config.validate();
  if (labeled.empty()) throw TrainingError("cannot train on an empty labeled set");
  if (checked_dimension(labeled) != dimension) throw TrainingError("dimension mismatch");

  const double n = static_cast<double>(labeled.size());
  std::vector<double> w(dimension, 0.0);
  double b = 0.0;
  std::vector<double> gw(dimension);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (const auto& ex : labeled) {
      double s = b;
      for (std::size_t k = 0; k < dimension; ++k) s += w[k] * ex.features[k];
      const double r = sigmoid(s) - ex.label;
      for (std::size_t k = 0; k < dimension; ++k) gw[k] += r * ex.features[k];
      gb += r;
    }
    for (std::size_t k = 0; k < dimension; ++k) w[k] -= config.step_size * (gw[k] / n + config.l2_lambda * w[k]);
    b -= config.step_size * gb / n;
  }
  return Model::logistic(std::move(w), b);
}

Model train(std::span<const LabeledExample> labeled, const LearnerConfig& config) {
  if (config.kind == ModelKind::logistic) {
    return train_logistic(labeled, checked_dimension(labeled), config.logistic);
  }
  return train_boosted(labeled, config.boost);
}

std::vector<double> loss_gradient(const Model& model, std::span<const double> x, int label) {
  if (!model.has_gradient()) {
    throw CapabilityError("loss_gradient: " + kind_name(model.kind()) + " model has no analytic gradient");
  }
  const double residual = model.predict_proba(x) - label;
  std::vector<double> g(x.size() + 1);
  for (std::size_t k = 0; k < x.size(); ++k) g[k] = residual * x[k];
  g[x.size()] = residual;
  return g;
}

double log_loss(const Model& model, std::span<const LabeledExample> labeled) {
  if (labeled.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : labeled) {
    const double p = model.predict_proba(ex.features);
    total -= ex.label ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(labeled.size());
}

// ---------------------------------------------------------------------------
// Committees

std::vector<double> Committee::member_posteriors(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(m.predict_proba(x));
  return out;
}

Committee train_committee(std::span<const LabeledExample> labeled, std::size_t size,
                          const LearnerConfig& config, std::uint64_t seed) {
  if (size < 2) throw ConfigError("committee size must be at least 2");
  if (labeled.empty()) throw TrainingError("cannot train a committee on an empty labeled set");
  Committee c;
  std::vector<LabeledExample> sample(labeled.size());
  for (std::size_t i = 0; i < size; ++i) {
    const std::uint64_t member_seed = seed ^ i;
    Rng rng(member_seed);
    for (auto& ex : sample) ex = labeled[static_cast<std::size_t>(rng.below(labeled.size()))];
    auto member_config = config;
    member_config.boost.seed = member_seed;
    c.members.push_back(train(sample, member_config));
    c.seeds.push_back(member_seed);
  }
  return c;
}

}  // namespace alids::learner
