#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ipbt/hpspace.hpp"
#include "ipbt/random.hpp"
#include "ipbt/trainable.hpp"

namespace ipbt {

using MemberId = std::uint64_t;

struct Member {
  MemberId id = 0;
  HPVector hps;
  WeightState weights;
  MemberId lineage_root = 0;  ///< iteration-initial member whose weights seeded this line
  MemberId parent_id = 0;     ///< source of the weights at the last exploit or restart; self if kept
  double last_score = 0.0;
  std::map<std::size_t, double> scores_by_step;
};

/// ceil(fraction * n), robust to representation error (0.25 * 8 stays 2).
inline std::size_t ceil_count(double fraction, std::size_t n) {
  double x = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

/// Indices of `scores` ordered best first; equal scores rank the smaller id first.
inline std::vector<std::size_t> rank_by_score(const std::vector<std::pair<MemberId, double>>& scores) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].second != scores[b].second) return scores[a].second > scores[b].second;
    return scores[a].first < scores[b].first;
  });
  return order;
}

/// Truncation selection: the bottom ceil(fraction*N) members, worst first, each
/// paired with a uniformly drawn member of the top ceil(fraction*N).
inline std::vector<std::pair<MemberId, MemberId>> exploit_select(
    const std::vector<std::pair<MemberId, double>>& scores, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 0.5)) throw std::invalid_argument("selection fraction must lie in (0, 0.5]");
  for (const auto& s : scores)
    if (std::isnan(s.second)) throw std::invalid_argument("exploit_select: NaN score");
  const std::size_t n = scores.size();
  const std::size_t k = std::min(ceil_count(fraction, n), n / 2);
  auto order = rank_by_score(scores);
  std::vector<std::pair<MemberId, MemberId>> pairs;
  pairs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    MemberId loser = scores[order[n - 1 - i]].first;
    MemberId winner = scores[order[uniform_index(rng, k)]].first;
    pairs.emplace_back(loser, winner);
  }
  return pairs;
}

}  // namespace ipbt
