#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipbt/gp.hpp"
#include "ipbt/hpspace.hpp"
#include "ipbt/population.hpp"
#include "ipbt/random.hpp"
#include "ipbt/trainable.hpp"

namespace ipbt {

struct RestartConfig {
  double shrink = 0.2;
  double perturb = 0.1;
  double weight_reinit_fraction = 0.5;
  double hp_random_fraction = 0.5;
  double meta_beta = 4.0;
  std::size_t meta_candidates = 1000;

  void validate() const {
    if (!(shrink >= 0.0)) throw std::invalid_argument("restart.shrink must be >= 0");
    if (!(perturb >= 0.0)) throw std::invalid_argument("restart.perturb must be >= 0");
    if (!(weight_reinit_fraction >= 0.0 && weight_reinit_fraction <= 1.0))
      throw std::invalid_argument("restart.weight_reinit_fraction must lie in [0,1]");
    if (!(hp_random_fraction >= 0.0 && hp_random_fraction <= 1.0))
      throw std::invalid_argument("restart.hp_random_fraction must lie in [0,1]");
    if (!(meta_beta >= 0.0)) throw std::invalid_argument("restart.meta_beta must be >= 0");
    if (meta_candidates == 0) throw std::invalid_argument("restart.meta_candidates must be >= 1");
  }
};

struct RestartEntry {
  HPVector initial_hps;
  double achieved = 0.0;  ///< best score of any descendant during the iteration
};

struct RestartRecord {
  std::size_t iteration_index = 0;
  std::vector<RestartEntry> entries;
};

enum class StepGrowth { exponential, linear, constant };

inline const char* to_string(StepGrowth g) {
  switch (g) {
    case StepGrowth::exponential: return "exponential";
    case StepGrowth::linear: return "linear";
    case StepGrowth::constant: return "constant";
  }
  return "exponential";
}

inline std::size_t grow_step(std::size_t step, StepGrowth mode, std::size_t initial) {
  if (step < 1) throw std::invalid_argument("grow_step: step must be >= 1");
  switch (mode) {
    case StepGrowth::exponential: return 2 * step;
    case StepGrowth::linear: return step + initial;
    case StepGrowth::constant: return step;
  }
  return step;
}

/// w' = shrink * w + perturb * fresh_init.
inline WeightState shrink_perturb(const WeightState& w, double shrink, double perturb, const Trainable& trainable,
                                  Rng& rng) {
  WeightState fresh = trainable.fresh_init(rng);
  if (fresh.values.size() != w.values.size()) throw std::invalid_argument("shrink_perturb: dimension mismatch");
  WeightState out;
  out.values.resize(w.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = shrink * w.values[i] + perturb * fresh.values[i];
  return out;
}

/// Uniformly random subset of {0..n-1} of size m, as a membership mask.
inline std::vector<bool> random_subset(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m && i < n; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < m && i < n; ++i) mask[idx[i]] = true;
  return mask;
}

/// Meta-level suggestions: time-varying GP over (normalized initial HPs,
/// iteration index) -> best descendant score, queried at the next iteration.
inline std::vector<HPVector> meta_bo_suggest(const std::vector<RestartRecord>& records,
                                             const HyperparameterSpace& space, std::size_t n, double beta,
                                             std::size_t n_candidates, Rng& rng) {
  std::vector<gp::Input> inputs;
  std::vector<double> targets;
  double now = 0.0;
  for (const auto& r : records) {
    for (const auto& e : r.entries) {
      inputs.push_back({space.normalize(e.initial_hps), static_cast<double>(r.iteration_index)});
      targets.push_back(e.achieved);
    }
    now = std::max(now, static_cast<double>(r.iteration_index) + 1.0);
  }
  if (inputs.size() < 2) {
    std::vector<HPVector> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(space.sample_uniform(rng));
    return out;
  }
  auto model = gp::fit(std::move(inputs), targets, gp::KernelBounds{}, rng);
  return gp::suggest_ucb(model, space, now, n, std::max(n, n_candidates), beta, rng);
}

/// Supplies n model-based HP vectors for a restart; defaults to meta_bo_suggest.
using HpSource = std::function<std::vector<HPVector>(std::size_t n, Rng& rng)>;

struct RestartOutcome {
  std::vector<Member> population;
  std::vector<bool> fresh_weights;  ///< slot got fresh_init weights (else shrink-perturbed)
  std::vector<bool> random_hps;     ///< slot got uniformly sampled HPs (else model-based)
};

/// Builds the next iteration's population of `target_size` members from the
/// finished one. New members get ids starting at `next_id`, which is advanced.
inline RestartOutcome perform_restart(const std::vector<Member>& pop, const std::vector<RestartRecord>& records,
                                      const RestartConfig& cfg, const HyperparameterSpace& space,
                                      const Trainable& trainable, std::size_t target_size,
                                      double selection_fraction, MemberId& next_id, Rng& rng,
                                      const HpSource& model_source = {}) {
  cfg.validate();
  if (pop.empty()) throw std::invalid_argument("perform_restart: empty population");
  if (target_size == 0) throw std::invalid_argument("perform_restart: target_size must be >= 1");

  std::vector<std::pair<MemberId, double>> scores;
  for (const auto& m : pop) scores.emplace_back(m.id, m.last_score);
  const auto order = rank_by_score(scores);
  const std::size_t top = std::max<std::size_t>(1, std::min(ceil_count(selection_fraction, pop.size()), pop.size()));

  // Weight sources: the best keep their own, everyone else (and every extra
  // slot) copies a uniformly chosen member of the best group.
  std::vector<const Member*> source(target_size);
  for (std::size_t s = 0; s < target_size; ++s) {
    if (s < top)
      source[s] = &pop[order[s]];
    else
      source[s] = &pop[order[uniform_index(rng, top)]];
  }

  RestartOutcome out;
  out.fresh_weights = random_subset(target_size, ceil_count(cfg.weight_reinit_fraction, target_size), rng);
  out.random_hps = random_subset(target_size, ceil_count(cfg.hp_random_fraction, target_size), rng);

  std::size_t n_model = 0;
  for (bool r : out.random_hps) n_model += !r;
  std::vector<HPVector> model_hps;
  if (n_model > 0) {
    bool have_data = false;
    for (const auto& r : records) have_data = have_data || !r.entries.empty();
    if (model_source)
      model_hps = model_source(n_model, rng);
    else if (have_data)
      model_hps = meta_bo_suggest(records, space, n_model, cfg.meta_beta, cfg.meta_candidates, rng);
    else
      for (std::size_t i = 0; i < n_model; ++i) model_hps.push_back(space.sample_uniform(rng));
    if (model_hps.size() != n_model) throw std::logic_error("HP source returned the wrong number of suggestions");
  }

  std::size_t next_model = 0;
  out.population.reserve(target_size);
  for (std::size_t s = 0; s < target_size; ++s) {
    Member m;
    m.id = next_id++;
    m.lineage_root = m.id;
    m.parent_id = source[s]->id;
    m.weights = out.fresh_weights[s] ? trainable.fresh_init(rng)
                                     : shrink_perturb(source[s]->weights, cfg.shrink, cfg.perturb, trainable, rng);
    m.hps = out.random_hps[s] ? space.sample_uniform(rng) : model_hps[next_model++];
    m.last_score = trainable.evaluate(m.weights);
    out.population.push_back(std::move(m));
  }
  return out;
}

}  // namespace ipbt
