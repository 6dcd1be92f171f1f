#include "alids/outlier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "alids/error.hpp"

namespace alids::outlier {

namespace {

double euclidean(const Point& a, const Point& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

double density_ratio(double num, double den) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (num == inf && den == inf) return 1.0;
  return num / den;
}

}  // namespace

std::size_t effective_k(std::size_t requested, std::size_t n) {
  if (n < 2) throw ParameterError("LOF needs at least two points");
  if (requested == 0) throw ParameterError("LOF k must be positive");
  return std::min(requested, n - 1);
}

std::vector<std::vector<Neighbor>> knn_distances(std::span<const Point> points, std::size_t k) {
  const std::size_t n = points.size();
  if (k == 0) throw ParameterError("k must be positive");
  if (n <= k) {
    throw ParameterError("k = " + std::to_string(k) + " needs at least " + std::to_string(k + 1) +
                         " points, got " + std::to_string(n));
  }
  for (const auto& p : points) {
    if (p.size() != points[0].size()) throw ParameterError("points differ in dimensionality");
  }

  std::vector<std::vector<Neighbor>> result(n);
  std::vector<Neighbor> candidates;
  candidates.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.push_back({j, euclidean(points[i], points[j])});
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), closer);
    result[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return result;
}

std::vector<LofScore> lof_scores(std::span<const Point> points, const LofParams& params) {
  const auto neighbors = knn_distances(points, params.k);
  const std::size_t n = points.size();
  const std::size_t k = params.k;

  std::vector<double> k_distance(n);
  for (std::size_t i = 0; i < n; ++i) k_distance[i] = neighbors[i][k - 1].distance;

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach_sum = 0.0;
    for (const auto& nb : neighbors[i]) reach_sum += std::max(k_distance[nb.id], nb.distance);
    lrd[i] = reach_sum == 0.0 ? std::numeric_limits<double>::infinity()
                              : static_cast<double>(k) / reach_sum;
  }

  std::vector<LofScore> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& nb : neighbors[i]) sum += density_ratio(lrd[nb.id], lrd[i]);
    scores[i] = {i, sum / static_cast<double>(k)};
  }
  return scores;
}

std::vector<std::size_t> rank_pool(std::span<const LofScore> scores, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw ParameterError("top_fraction must lie in (0,1]");
  }
  std::vector<LofScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const LofScore& a, const LofScore& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  });
  // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
  const double want = top_fraction * static_cast<double>(sorted.size());
  const auto keep = std::min(sorted.size(), static_cast<std::size_t>(std::ceil(want - 1e-9)));
  std::vector<std::size_t> ids;
  ids.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(sorted[i].id);
  return ids;
}

}  // namespace alids::outlier
