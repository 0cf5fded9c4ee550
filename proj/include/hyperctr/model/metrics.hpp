#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "hyperctr/errors.hpp"

namespace hyperctr {

inline constexpr double kProbabilityFloor = 1e-12;

// Counts how many predictions hit the [1e-12, 1-1e-12] clamp.
struct ClampCounter {
  std::size_t clamped = 0;
};

inline double bce_loss(double prob, double label, ClampCounter* counter = nullptr) {
  double p = prob;
  if (p < kProbabilityFloor || p > 1.0 - kProbabilityFloor) {
    p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
    if (counter != nullptr) ++counter->clamped;
  }
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

inline double logloss(std::span<const double> probs, std::span<const double> labels, ClampCounter* counter = nullptr) {
  if (probs.size() != labels.size()) throw MetricError("logloss: score and label counts differ");
  if (probs.empty()) throw MetricError("logloss of an empty set is undefined");
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) total += bce_loss(probs[k], labels[k], counter);
  return total / static_cast<double>(probs.size());
}

// Rank-sum (Mann-Whitney) AUC with average ranks for ties.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: score and label counts differ");
  std::size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw MetricError("auc: labels must be 0 or 1");
    pos += y == 1.0 ? 1 : 0;
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw MetricError("auc: non-finite score");
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc is undefined without both positive and negative labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps tied ranks integral.
  unsigned long long twice_rank_sum = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const unsigned long long twice_avg_rank = (lo + 1) + (hi + 1);
    for (std::size_t k = lo; k <= hi; ++k) {
      if (labels[order[k]] == 1.0) twice_rank_sum += twice_avg_rank;
    }
    lo = hi + 1;
  }
  const unsigned long long twice_u = twice_rank_sum - static_cast<unsigned long long>(pos) * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace hyperctr
