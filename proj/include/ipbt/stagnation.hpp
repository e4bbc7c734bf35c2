#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipbt/gp.hpp"

namespace ipbt {

/// Which trajectory the z-scoring spans.
enum class StagnationScope { iteration, run };

/// data_driven: smoothed z-scored criteria. bgpbt: raw patience plus a forced
/// restart after a fixed fraction of the budget (ablation only).
enum class StagnationMode { data_driven, bgpbt };

struct StagnationConfig {
  int t_patience = 3;
  int t_interval = 15;
  int min_steps = 4;
  /// Smallest smoothed gain (z units) that counts as an improvement between
  /// consecutive steps; absorbs sub-percent ripples of the smoother.
  double min_improvement = 0.01;
  StagnationScope scope = StagnationScope::iteration;
  StagnationMode mode = StagnationMode::data_driven;
  double forced_restart_fraction = 0.3;  ///< bgpbt mode only

  void validate() const {
    if (t_patience < 1) throw std::invalid_argument("stagnation.t_patience must be >= 1");
    if (t_interval < 2) throw std::invalid_argument("stagnation.t_interval must be >= 2");
    if (min_steps < 1) throw std::invalid_argument("stagnation.min_steps must be >= 1");
    if (!(min_improvement >= 0.0)) throw std::invalid_argument("stagnation.min_improvement must be >= 0");
    if (!(forced_restart_fraction > 0.0 && forced_restart_fraction <= 1.0))
      throw std::invalid_argument("stagnation.forced_restart_fraction must lie in (0,1]");
  }

  /// Warm-up length: no restart is possible with fewer scores than this.
  int warmup() const { return std::max(min_steps, t_patience + 1); }
};

struct TrajectoryState {
  /// Best population score at each outer step. With run scope this spans the
  /// whole run and `iteration_start` marks where the current iteration began.
  std::vector<double> best_scores;
  std::size_t iteration_start = 0;
  int no_improve_streak = 0;

  std::size_t iteration_length() const { return best_scores.size() - iteration_start; }

  void begin_iteration(StagnationScope scope) {
    if (scope == StagnationScope::iteration) best_scores.clear();
    iteration_start = best_scores.size();
    no_improve_streak = 0;
  }
};

enum class RestartReason { none, no_improvement, slow_improvement, forced };

inline const char* to_string(RestartReason r) {
  switch (r) {
    case RestartReason::none: return "none";
    case RestartReason::no_improvement: return "no_improvement";
    case RestartReason::slow_improvement: return "slow_improvement";
    case RestartReason::forced: return "forced";
  }
  return "none";
}

struct StagnationDecision {
  bool restart = false;
  RestartReason reason = RestartReason::none;
};

namespace detail {

inline StagnationDecision check_data_driven(TrajectoryState& s, const StagnationConfig& cfg) {
  const std::size_t len = s.iteration_length();
  if (s.best_scores.size() < 2 || len < 2) return {};
  auto smoothed = gp::smooth_trajectory(s.best_scores);
  const std::size_t last = smoothed.size() - 1;

  if (smoothed[last] - smoothed[last - 1] <= cfg.min_improvement)
    ++s.no_improve_streak;
  else
    s.no_improve_streak = 0;

  if (len < static_cast<std::size_t>(cfg.warmup())) return {};
  if (s.no_improve_streak >= cfg.t_patience) return {true, RestartReason::no_improvement};
  const auto interval = static_cast<std::size_t>(cfg.t_interval);
  if (len > interval && smoothed[last] - smoothed[last - interval] < 1.0)
    return {true, RestartReason::slow_improvement};
  return {};
}

inline StagnationDecision check_bgpbt(TrajectoryState& s, const StagnationConfig& cfg) {
  const std::size_t len = s.iteration_length();
  if (len >= 2) {
    double prev_best = *std::max_element(s.best_scores.begin() + static_cast<std::ptrdiff_t>(s.iteration_start),
                                         s.best_scores.end() - 1);
    if (s.best_scores.back() > prev_best)
      s.no_improve_streak = 0;
    else
      ++s.no_improve_streak;
  }
  if (len < static_cast<std::size_t>(cfg.warmup())) return {};
  if (s.no_improve_streak >= cfg.t_patience) return {true, RestartReason::no_improvement};
  return {};
}

}  // namespace detail

/// Called once per outer step after the step's best score was appended.
/// Updates the non-improvement streak and decides whether to restart.
inline StagnationDecision check_restart(TrajectoryState& state, const StagnationConfig& cfg) {
  return cfg.mode == StagnationMode::data_driven ? detail::check_data_driven(state, cfg)
                                                 : detail::check_bgpbt(state, cfg);
}

}  // namespace ipbt
