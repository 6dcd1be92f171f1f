#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace alids::outlier {

/// Local Outlier Factor parameters. Distances are Euclidean.
struct LofParams {
  std::size_t k = 20;
};

struct Neighbor {
  std::size_t id = 0;  // position in the input point list
  double distance = 0.0;
};

struct LofScore {
  std::size_t id = 0;
  double score = 1.0;
};

using Point = std::vector<double>;

/// The k nearest other points of every point, nearest first, ties by lower id.
/// Throws ParameterError unless 1 <= k < n.
std::vector<std::vector<Neighbor>> knn_distances(std::span<const Point> points, std::size_t k);

/// LOF score per point (id = input position).
///
/// A neighborhood whose reachability distances are all zero (exact duplicates)
/// has infinite local reachability density; inf/inf ratios count as 1, so a
/// pool of identical points scores 1 everywhere. A point whose neighbors sit
/// in such a duplicate cluster while it does not scores +inf.
std::vector<LofScore> lof_scores(std::span<const Point> points, const LofParams& params);

/// Ids by descending score (ties by ascending id), truncated to ceil(top_fraction * n).
std::vector<std::size_t> rank_pool(std::span<const LofScore> scores, double top_fraction = 1.0);

/// k = min(requested, n - 1). Throws ParameterError for n < 2.
std::size_t effective_k(std::size_t requested, std::size_t n);

}  // namespace alids::outlier
