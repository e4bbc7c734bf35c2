#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipbt/engine.hpp"
#include "ipbt/hpspace.hpp"
#include "ipbt/random.hpp"
#include "ipbt/trainable.hpp"

namespace ipbt {

/// Vanilla PBT: the engine loop without restarts or over-provisioning, a
/// constant step size and random-perturbation explore.
inline EngineConfig pbt_config(EngineConfig cfg) {
  cfg.restarts_enabled = false;
  cfg.step_growth = StepGrowth::constant;
  cfg.explore = ExploreMode::perturb;
  cfg.n_multiplier = 1;
  return cfg;
}

inline RunHistory run_pbt(const EngineConfig& cfg, const HyperparameterSpace& space, const Trainable& trainable) {
  return Engine(pbt_config(cfg), space, trainable, "pbt").run();
}

struct RandomSearchConfig {
  std::size_t budget = 8000;  ///< total inner steps over all configs
  std::size_t n_configs = 8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// budget / n_configs, with the remainder spread one step each over the
  /// first configs so the total is exact.
  std::size_t per_config(std::size_t i) const { return budget / n_configs + (i < budget % n_configs ? 1 : 0); }

  void validate() const {
    if (n_configs == 0) throw std::invalid_argument("random_search.n_configs must be >= 1");
    if (budget < n_configs) throw std::invalid_argument("random_search.budget must give every config >= 1 step");
    if (threads < 1) throw std::invalid_argument("random_search.threads must be >= 1");
  }
};

/// n_configs uniform configurations trained independently for about
/// budget/n_configs steps each; the best final validation score wins.
inline RunHistory run_random_search(const RandomSearchConfig& cfg, const HyperparameterSpace& space,
                                    const Trainable& trainable) {
  cfg.validate();
  std::vector<HPVector> hps(cfg.n_configs);
  std::vector<WeightState> weights(cfg.n_configs);
  std::vector<double> initial(cfg.n_configs);
  for (std::size_t i = 0; i < cfg.n_configs; ++i) {
    Rng hp_rng = derive_stream(cfg.seed, StreamPurpose::baseline, {0, i});
    Rng init_rng = derive_stream(cfg.seed, StreamPurpose::member_init, {i});
    hps[i] = space.sample_uniform(hp_rng);
    weights[i] = trainable.fresh_init(init_rng);
    initial[i] = trainable.evaluate(weights[i]);
  }
  parallel_for(cfg.n_configs, cfg.threads, [&](std::size_t i) {
    Rng rng = derive_stream(cfg.seed, StreamPurpose::member_training, {i, 0});
    weights[i] = trainable.train(weights[i], hps[i], cfg.per_config(i), 0, rng);
  });

  RunHistory h;
  h.optimizer = "random_search";
  h.budget = cfg.budget;
  for (std::size_t i = 0; i < cfg.n_configs; ++i) h.budget_used += cfg.per_config(i);
  h.total_train_steps = h.budget_used;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg.n_configs; ++i) {
    StepRecord r;
    r.outer_step = i;
    r.step_size = cfg.per_config(i);
    h.step_schedule.push_back(r.step_size);
    r.member_id = i;
    r.lineage_root = r.parent_id = i;
    r.hps = hps[i];
    r.score = trainable.evaluate(weights[i]);
    r.score_delta = r.score - initial[i];
    h.records.push_back(r);
    if (!h.best.valid || r.score > h.best.score) {
      h.best.valid = true;
      h.best.score = r.score;
      h.best.member_id = i;
      h.best.hps = hps[i];
      h.best.weights = weights[i];
      h.best.source = "final";
    }
    best = std::max(best, r.score);
    h.best_so_far.push_back(best);
  }
  h.best.test_score = trainable.test_score(h.best.weights);
  h.complete = true;
  return h;
}

struct AshaConfig {
  std::size_t eta = 2;
  std::size_t min_resource = 1;   ///< inner steps at rung 0
  std::size_t max_resource = 64;  ///< inner steps at the top rung
  std::size_t n_configs = 1000;   ///< cap on configurations started
  std::size_t budget = 8000;      ///< total inner steps
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  /// Rung resources min_resource * eta^k that do not exceed max_resource.
  std::vector<std::size_t> rungs() const {
    std::vector<std::size_t> r;
    for (std::size_t x = min_resource; x <= max_resource; x *= eta) {
      r.push_back(x);
      if (x > max_resource / eta) break;
    }
    return r;
  }

  void validate() const {
    if (eta < 2) throw std::invalid_argument("asha.eta must be >= 2");
    if (min_resource < 1) throw std::invalid_argument("asha.min_resource must be >= 1");
    if (!(min_resource < max_resource)) throw std::invalid_argument("asha.min_resource must be < max_resource");
    if (n_configs < 1) throw std::invalid_argument("asha.n_configs must be >= 1");
    if (workers < 1) throw std::invalid_argument("asha.workers must be >= 1");
    if (budget < min_resource) throw std::invalid_argument("asha.budget must cover one rung-0 job");
  }
};

/// Asynchronous successive halving, simulated on a virtual clock: each job
/// costs its inner steps in time, completions are processed in time order
/// (ties by worker index), and freed workers ask the scheduler for new jobs.
/// A job that does not fit the remaining budget is cut to it; the cut run is
/// logged but never enters a rung.
class Asha {
 public:
  struct Job {
    std::size_t config = 0;
    std::size_t rung = 0;
    std::size_t steps = 0;
    bool partial = false;
  };

  Asha(AshaConfig cfg, const HyperparameterSpace& space, const Trainable& trainable)
      : cfg_((cfg.validate(), cfg)), space_(space), trainable_(trainable), rungs_(cfg.rungs()), results_(rungs_.size()),
        promoted_(rungs_.size()), rung_best_(rungs_.size()) {}

  const std::vector<std::size_t>& rungs() const { return rungs_; }

  /// Total inner steps a config has trained after completing `rung`.
  std::size_t resource(std::size_t rung) const { return rungs_[rung]; }

  RunHistory run() {
    RunHistory h;
    h.optimizer = "asha";
    h.budget = cfg_.budget;

    struct Running {
      double finish;
      std::size_t worker;
      Job job;
      bool operator>(const Running& o) const {
        return finish != o.finish ? finish > o.finish : worker > o.worker;
      }
    };
    std::priority_queue<Running, std::vector<Running>, std::greater<>> queue;
    std::size_t committed = 0;
    std::set<std::size_t> idle;
    auto dispatch = [&](std::size_t worker, double now) {
      const std::size_t remaining = cfg_.budget - committed;
      std::optional<Job> job;
      if (remaining > 0) job = next_job();
      if (!job) {
        idle.insert(worker);
        return;
      }
      idle.erase(worker);
      if (job->steps > remaining) {
        job->steps = remaining;
        job->partial = true;
      }
      committed += job->steps;
      queue.push({now + static_cast<double>(job->steps), worker, *job});
    };
    for (std::size_t w = 0; w < cfg_.workers; ++w) dispatch(w, 0.0);

    double best = -std::numeric_limits<double>::infinity();
    std::size_t completion = 0;
    while (!queue.empty()) {
      Running done = queue.top();
      queue.pop();
      const double score = execute(done.job);
      StepRecord r;
      r.outer_step = completion++;
      r.iteration = done.job.rung;
      r.step_size = done.job.steps;
      r.member_id = done.job.config;
      r.lineage_root = r.parent_id = done.job.config;
      r.hps = configs_[done.job.config].hps;
      r.score = score;
      r.score_delta = score - configs_[done.job.config].last_score;
      configs_[done.job.config].last_score = score;
      h.records.push_back(r);
      h.step_schedule.push_back(r.step_size);
      best = std::max(best, score);
      h.best_so_far.push_back(best);
      realized_.push_back(done.job);
      dispatch(done.worker, done.finish);
      // A new result can unlock promotions for workers that found nothing.
      for (auto w : std::vector<std::size_t>(idle.begin(), idle.end())) dispatch(w, done.finish);
    }

    h.budget_used = committed;
    h.total_train_steps = committed;
    select_best(h);
    h.complete = true;
    return h;
  }

  /// (config, rung) jobs in completion order.
  const std::vector<Job>& realized_schedule() const { return realized_; }

 private:
  struct Config {
    HPVector hps;
    WeightState weights;
    std::size_t trained = 0;
    double last_score = 0.0;
  };

  std::size_t cost(std::size_t rung) const { return resource(rung) - (rung == 0 ? 0 : resource(rung - 1)); }

  /// Promote the best unpromoted config sitting in the top 1/eta of the
  /// highest possible rung; otherwise start a new config.
  std::optional<Job> next_job() {
    for (std::size_t k = rungs_.size() - 1; k-- > 0;) {
      auto& res = results_[k];
      const std::size_t top = res.size() / cfg_.eta;
      if (top == 0) continue;
      std::vector<std::size_t> order(res.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      // Ties keep the earlier completion first.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return res[a].second > res[b].second;
      });
      for (std::size_t i = 0; i < top; ++i) {
        const std::size_t c = res[order[i]].first;
        if (promoted_[k].count(c)) continue;
        promoted_[k].insert(c);
        return Job{c, k + 1, cost(k + 1)};
      }
    }
    if (configs_.size() >= cfg_.n_configs) return std::nullopt;
    Rng hp_rng = derive_stream(cfg_.seed, StreamPurpose::baseline, {0, configs_.size()});
    Rng init_rng = derive_stream(cfg_.seed, StreamPurpose::member_init, {configs_.size()});
    Config c;
    c.hps = space_.sample_uniform(hp_rng);
    c.weights = trainable_.fresh_init(init_rng);
    c.last_score = trainable_.evaluate(c.weights);
    configs_.push_back(std::move(c));
    return Job{configs_.size() - 1, 0, cost(0)};
  }

  double execute(const Job& j) {
    Config& c = configs_[j.config];
    Rng rng = derive_stream(cfg_.seed, StreamPurpose::member_training, {j.config, j.rung});
    c.weights = trainable_.train(c.weights, c.hps, j.steps, c.trained, rng);
    c.trained += j.steps;
    const double score = trainable_.evaluate(c.weights);
    if (!j.partial) {
      results_[j.rung].emplace_back(j.config, score);
      RungBest& b = rung_best_[j.rung];
      if (!b.valid || score > b.score) b = {true, score, j.config, c.weights};
    }
    return score;
  }

  /// Best config at the highest rung any config completed, with its weights
  /// as of that rung.
  void select_best(RunHistory& h) const {
    for (std::size_t k = rungs_.size(); k-- > 0;) {
      const RungBest& b = rung_best_[k];
      if (!b.valid) continue;
      h.best.valid = true;
      h.best.score = b.score;
      h.best.member_id = b.config;
      h.best.outer_step = k;
      h.best.hps = configs_[b.config].hps;
      h.best.weights = b.weights;
      h.best.test_score = trainable_.test_score(b.weights);
      h.best.source = "final";
      return;
    }
  }

  struct RungBest {
    bool valid = false;
    double score = 0.0;
    std::size_t config = 0;
    WeightState weights;
  };

  AshaConfig cfg_;
  HyperparameterSpace space_;
  const Trainable& trainable_;
  std::vector<std::size_t> rungs_;
  std::vector<std::vector<std::pair<std::size_t, double>>> results_;
  std::vector<std::set<std::size_t>> promoted_;
  std::vector<RungBest> rung_best_;
  std::vector<Config> configs_;
  std::vector<Job> realized_;
};

inline RunHistory run_asha(const AshaConfig& cfg, const HyperparameterSpace& space, const Trainable& trainable) {
  return Asha(cfg, space, trainable).run();
}

}  // namespace ipbt
