#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipbt/gp.hpp"
#include "ipbt/hpspace.hpp"
#include "ipbt/population.hpp"
#include "ipbt/random.hpp"
#include "ipbt/restart.hpp"
#include "ipbt/stagnation.hpp"
#include "ipbt/trainable.hpp"

namespace ipbt {

/// Where a restart's model-based HP half comes from.
enum class HpStrategy { meta_bo, global_bo, random };
/// How copies get new HPs inside an iteration.
enum class ExploreMode { bo, perturb };

inline const char* to_string(HpStrategy s) {
  switch (s) {
    case HpStrategy::meta_bo: return "meta_bo";
    case HpStrategy::global_bo: return "global_bo";
    case HpStrategy::random: return "random";
  }
  return "meta_bo";
}

inline const char* to_string(ExploreMode e) { return e == ExploreMode::bo ? "bo" : "perturb"; }

struct EngineConfig {
  std::size_t population_size = 8;
  std::size_t budget = 1000;  ///< inner steps per population slot (step_max)
  double initial_step_fraction = 0.01;
  double selection_fraction = 0.25;
  std::size_t n_multiplier = 2;
  StepGrowth step_growth = StepGrowth::exponential;
  StagnationConfig stagnation;
  RestartConfig restart;
  std::uint64_t seed = 0;

  bool restarts_enabled = true;
  HpStrategy hp_strategy = HpStrategy::meta_bo;
  ExploreMode explore = ExploreMode::bo;
  double ucb_beta = 4.0;
  std::size_t ucb_candidates = 1000;
  std::size_t bo_max_records = 64;  ///< most recent records used by the within-iteration GP
  double perturb_resample_prob = 0.25;
  std::size_t threads = 1;

  std::size_t initial_step() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(initial_step_fraction * static_cast<double>(budget))));
  }

  void validate() const {
    if (population_size < 2) throw std::invalid_argument("engine.population_size must be >= 2");
    if (!(selection_fraction > 0.0 && selection_fraction <= 0.5))
      throw std::invalid_argument("engine.selection_fraction must lie in (0, 0.5]");
    if (!(initial_step_fraction > 0.0 && initial_step_fraction < 1.0))
      throw std::invalid_argument("engine.initial_step_fraction must lie in (0, 1)");
    if (n_multiplier < 1) throw std::invalid_argument("engine.n_multiplier must be >= 1");
    if (budget < initial_step()) throw std::invalid_argument("engine.budget must be at least the initial step size");
    if (!(ucb_beta >= 0.0)) throw std::invalid_argument("engine.ucb_beta must be >= 0");
    if (ucb_candidates < population_size) throw std::invalid_argument("engine.ucb_candidates must be >= population_size");
    if (bo_max_records < 2) throw std::invalid_argument("engine.bo_max_records must be >= 2");
    if (!(perturb_resample_prob >= 0.0 && perturb_resample_prob <= 1.0))
      throw std::invalid_argument("engine.perturb_resample_prob must lie in [0, 1]");
    if (threads < 1) throw std::invalid_argument("engine.threads must be >= 1");
    stagnation.validate();
    restart.validate();
  }
};

/// One member evaluated at one outer step.
struct StepRecord {
  std::size_t outer_step = 0;
  std::size_t iteration = 0;
  std::size_t t = 0;  ///< outer step index within the iteration
  std::size_t step_size = 0;
  MemberId member_id = 0;
  MemberId lineage_root = 0;
  MemberId parent_id = 0;
  HPVector hps;
  double score = 0.0;
  double score_delta = 0.0;  ///< score minus the slot's previous score
  bool restart_flag = false;  ///< this outer step ended its iteration
};

struct RestartEvent {
  std::size_t outer_step = 0;
  std::size_t iteration = 0;  ///< iteration that ended
  RestartReason reason = RestartReason::none;
  std::size_t consumed = 0;
  std::size_t next_step_size = 0;
};

struct BestModel {
  bool valid = false;
  double score = 0.0;
  double test_score = 0.0;
  MemberId member_id = 0;
  std::size_t outer_step = 0;
  HPVector hps;
  WeightState weights;
  std::string source;  ///< "pre_restart" or "final"
};

struct RunHistory {
  std::string optimizer;
  std::size_t budget = 0;       ///< in the optimizer's own budget unit
  std::size_t budget_used = 0;  ///< same unit as budget
  std::size_t total_train_steps = 0;  ///< inner steps summed over every trained member
  std::vector<StepRecord> records;
  std::vector<RestartEvent> restarts;
  std::vector<std::size_t> step_schedule;  ///< inner steps trained at each outer step
  std::vector<double> best_so_far;         ///< best validation score seen up to each outer step
  BestModel best;
  bool complete = false;

  /// Step sizes in effect at the start of each iteration.
  std::vector<std::size_t> iteration_step_sizes() const {
    std::vector<std::size_t> out;
    if (!step_schedule.empty()) out.push_back(step_schedule.front());
    for (const auto& r : restarts) out.push_back(r.next_step_size);
    return out;
  }
};

/// For every iteration-initial member, the best score recorded by any member
/// of its lineage within the iteration.
inline std::map<MemberId, double> lineage_best_scores(const RunHistory& history, std::size_t iteration) {
  std::map<MemberId, double> best;
  for (const auto& r : history.records) {
    if (r.iteration != iteration) continue;
    auto [it, inserted] = best.emplace(r.lineage_root, r.score);
    if (!inserted) it->second = std::max(it->second, r.score);
  }
  return best;
}

/// Random-perturbation explore: per dimension, resample uniformly with
/// probability `resample_prob`, otherwise scale by 0.8 or 1.2 (additively in
/// the exponent for log dims) or step an integer dim by +-1; clamped to range.
inline HPVector perturb_hps(const HyperparameterSpace& space, const HPVector& h, double resample_prob, Rng& rng) {
  HPVector out = h;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& d = space.dim(i);
    double e;
    if (uniform01(rng) < resample_prob) {
      if (d.kind == DimKind::integer)
        e = static_cast<double>(std::uniform_int_distribution<long long>(static_cast<long long>(d.low),
                                                                         static_cast<long long>(d.high))(rng));
      else
        e = std::uniform_real_distribution<double>(d.low, d.high)(rng);
    } else {
      const bool up = uniform01(rng) < 0.5;
      e = d.encode(h.values[i]);
      if (d.kind == DimKind::integer)
        e = d.snap_encoded(e + (up ? 1.0 : -1.0));
      else if (d.is_log())
        e = std::clamp(e + std::log(up ? 1.2 : 0.8) / std::log(*d.log_base), d.low, d.high);
      else
        e = std::clamp(e * (up ? 1.2 : 0.8), d.low, d.high);
    }
    out.values[i] = std::clamp(d.decode(e), d.native_low(), d.native_high());
  }
  space.check(out);
  return out;
}

class Engine {
 public:
  static constexpr std::uint64_t kCheckpointVersion = 1;

  Engine(EngineConfig cfg, const HyperparameterSpace& space, const Trainable& trainable, std::string optimizer = "ipbt")
      : cfg_(std::move(cfg)), space_(space), trainable_(&trainable) {
    cfg_.validate();
    history_.optimizer = std::move(optimizer);
    history_.budget = cfg_.budget;
    initial_step_ = step_size_ = cfg_.initial_step();
    Rng rng = derive_stream(cfg_.seed, StreamPurpose::member_init, {0});
    for (std::size_t i = 0; i < cfg_.n_multiplier * cfg_.population_size; ++i) {
      Member m;
      m.id = next_id_++;
      m.lineage_root = m.parent_id = m.id;
      m.hps = space_.sample_uniform(rng);
      m.weights = trainable_->fresh_init(rng);
      m.last_score = trainable_->evaluate(m.weights);
      pop_.push_back(std::move(m));
    }
    begin_iteration_bookkeeping();
  }

  const EngineConfig& config() const { return cfg_; }
  const RunHistory& history() const { return history_; }
  const std::vector<Member>& population() const { return pop_; }
  std::size_t step_size() const { return step_size_; }
  std::size_t consumed() const { return consumed_; }
  std::size_t outer_step() const { return outer_step_; }
  std::size_t iteration() const { return iteration_; }
  const std::vector<RestartRecord>& restart_records() const { return restart_records_; }
  bool done() const { return history_.complete; }

  RunHistory run() {
    while (!done()) step();
    return history_;
  }

  /// One outer step: train, evaluate, then restart or exploit/explore.
  void step() {
    if (done()) return;
    const std::size_t inner = std::min(step_size_, cfg_.budget - consumed_);
    train_population(inner);
    consumed_ += inner;
    history_.budget_used = consumed_;
    history_.total_train_steps += inner * pop_.size();
    history_.step_schedule.push_back(inner);

    const std::size_t first_record = history_.records.size();
    double step_best = -std::numeric_limits<double>::infinity();
    for (auto& m : pop_) {
      const double score = trainable_->evaluate(m.weights);
      StepRecord r;
      r.outer_step = outer_step_;
      r.iteration = iteration_;
      r.t = t_in_iteration_;
      r.step_size = inner;
      r.member_id = m.id;
      r.lineage_root = m.lineage_root;
      r.parent_id = m.parent_id;
      m.parent_id = m.id;
      r.hps = m.hps;
      r.score = score;
      r.score_delta = score - m.last_score;
      m.last_score = score;
      m.scores_by_step[outer_step_] = score;
      step_best = std::max(step_best, score);
      history_.records.push_back(std::move(r));
    }
    const double prev_best = history_.best_so_far.empty() ? step_best : history_.best_so_far.back();
    history_.best_so_far.push_back(std::max(prev_best, step_best));

    if (pop_.size() > cfg_.population_size) trim_population();
    traj_.best_scores.push_back(step_best);

    if (consumed_ >= cfg_.budget) {
      consider_best(pop_, "final");
      finalize_best();
      history_.complete = true;
      ++outer_step_;
      return;
    }

    StagnationDecision decision;
    if (cfg_.restarts_enabled) {
      decision = check_restart(traj_, cfg_.stagnation);
      if (!decision.restart && cfg_.stagnation.mode == StagnationMode::bgpbt &&
          static_cast<double>(consumed_ - iteration_start_consumed_) >=
              cfg_.stagnation.forced_restart_fraction * static_cast<double>(cfg_.budget))
        decision = {true, RestartReason::forced};
    }

    if (decision.restart) {
      for (std::size_t i = first_record; i < history_.records.size(); ++i) history_.records[i].restart_flag = true;
      do_restart(decision.reason);
    } else {
      exploit_and_explore();
      ++t_in_iteration_;
    }
    ++outer_step_;
  }

  // --- checkpointing -------------------------------------------------------

  void save_checkpoint(std::ostream& os) const {
    std::ostringstream body(std::ios::binary);
    const std::string meta = state_to_json().dump();
    body.write("IPBTCKPT", 8);
    detail::write_u64(body, kCheckpointVersion);
    detail::write_u64(body, meta.size());
    body.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    for (const auto& m : pop_) write_weight_state(body, trainable_->kind(), m.weights);
    if (history_.best.valid) write_weight_state(body, trainable_->kind(), history_.best.weights);
    const std::string bytes = body.str();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    detail::write_u64(os, fnv1a(bytes));
  }

  void save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    save_checkpoint(os);
    if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
  }

  /// Replaces the engine state with a checkpoint. Throws without modifying the
  /// engine if the file is corrupt or was written for another configuration.
  void load_checkpoint(std::istream& is) {
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 32) throw std::runtime_error("checkpoint truncated");
    std::string body = bytes.substr(0, bytes.size() - 8);
    std::istringstream tail(bytes.substr(bytes.size() - 8));
    if (detail::read_u64(tail) != fnv1a(body)) throw std::runtime_error("checkpoint checksum mismatch");
    std::istringstream in(body);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "IPBTCKPT") throw std::runtime_error("not an ipbt checkpoint");
    if (detail::read_u64(in) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
    const auto meta_len = detail::read_u64(in);
    if (meta_len > body.size()) throw std::runtime_error("checkpoint header corrupt");
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    Engine next(*this);
    next.state_from_json(nlohmann::json::parse(meta));
    for (auto& m : next.pop_) m.weights = read_weight_state(in, trainable_->kind());
    if (next.history_.best.valid) next.history_.best.weights = read_weight_state(in, trainable_->kind());
    for (const auto& m : next.pop_)
      if (m.weights.dim() != trainable_->weight_dim()) throw std::runtime_error("checkpoint weight dimension mismatch");
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint has trailing data");
    *this = std::move(next);
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    load_checkpoint(is);
  }

 private:
  Engine(const Engine&) = default;
  Engine& operator=(Engine&&) = default;

  void train_population(std::size_t inner) {
    const std::size_t global_step = consumed_;
    const std::size_t step = outer_step_;
    parallel_for(pop_.size(), cfg_.threads, [&](std::size_t i) {
      Member& m = pop_[i];
      Rng rng = derive_stream(cfg_.seed, StreamPurpose::member_training, {m.id, step});
      m.weights = trainable_->train(m.weights, m.hps, inner, global_step, rng);
    });
  }

  void trim_population() {
    auto order = rank_by_score(scores());
    std::vector<Member> kept;
    kept.reserve(cfg_.population_size);
    for (std::size_t i = 0; i < cfg_.population_size; ++i) kept.push_back(std::move(pop_[order[i]]));
    pop_ = std::move(kept);
  }

  std::vector<std::pair<MemberId, double>> scores() const {
    std::vector<std::pair<MemberId, double>> s;
    s.reserve(pop_.size());
    for (const auto& m : pop_) s.emplace_back(m.id, m.last_score);
    return s;
  }

  Member& member(MemberId id) {
    for (auto& m : pop_)
      if (m.id == id) return m;
    throw std::logic_error("unknown member id");
  }

  void exploit_and_explore() {
    Rng rng = derive_stream(cfg_.seed, StreamPurpose::control, {outer_step_});
    auto pairs = exploit_select(scores(), cfg_.selection_fraction, rng);
    // Snapshot winners first so a member that is both loser and winner cannot
    // leak explored HPs into another copy.
    std::vector<Member> winners;
    for (const auto& [loser, winner] : pairs) winners.push_back(member(winner));
    std::vector<HPVector> fresh;
    if (cfg_.explore == ExploreMode::bo) fresh = bo_suggestions(pairs.size(), rng);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      Member& l = member(pairs[k].first);
      const Member& w = winners[k];
      l.weights = w.weights;
      l.lineage_root = w.lineage_root;
      l.parent_id = w.id;
      l.last_score = w.last_score;
      l.hps = cfg_.explore == ExploreMode::bo ? fresh[k] : perturb_hps(space_, w.hps, cfg_.perturb_resample_prob, rng);
    }
  }

  /// Time-varying GP-UCB over the current iteration's (hps, t) -> score delta.
  std::vector<HPVector> bo_suggestions(std::size_t n, Rng& rng) const {
    const std::size_t end = history_.records.size();
    const std::size_t begin = std::max(iteration_record_begin_, end > cfg_.bo_max_records ? end - cfg_.bo_max_records : 0);
    if (end - begin < 2) {
      std::vector<HPVector> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(space_.sample_uniform(rng));
      return out;
    }
    std::vector<gp::Input> inputs;
    std::vector<double> targets;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = history_.records[i];
      inputs.push_back({space_.normalize(r.hps), static_cast<double>(r.t)});
      targets.push_back(r.score_delta);
    }
    auto model = gp::fit(std::move(inputs), targets, gp::KernelBounds{}, rng);
    return gp::suggest_ucb(model, space_, static_cast<double>(t_in_iteration_ + 1), n, cfg_.ucb_candidates,
                           cfg_.ucb_beta, rng);
  }

  /// Ablation: one GP over every record of the run, raw scores, global time.
  std::vector<HPVector> global_bo_suggestions(std::size_t n, Rng& rng) const {
    const std::size_t end = history_.records.size();
    const std::size_t begin = end > cfg_.bo_max_records ? end - cfg_.bo_max_records : 0;
    std::vector<gp::Input> inputs;
    std::vector<double> targets;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = history_.records[i];
      inputs.push_back({space_.normalize(r.hps), static_cast<double>(r.outer_step)});
      targets.push_back(r.score);
    }
    auto model = gp::fit(std::move(inputs), targets, gp::KernelBounds{}, rng);
    return gp::suggest_ucb(model, space_, static_cast<double>(outer_step_ + 1), n, std::max(n, cfg_.ucb_candidates),
                           cfg_.restart.meta_beta, rng);
  }

  void do_restart(RestartReason reason) {
    consider_best(pop_, "pre_restart");

    RestartRecord rec{iteration_, {}};
    for (const auto& [root, best] : lineage_best_scores(history_, iteration_))
      rec.entries.push_back({root_hps_.at(root), best});
    restart_records_.push_back(std::move(rec));

    Rng rng = derive_stream(cfg_.seed, StreamPurpose::restart, {iteration_});
    RestartConfig rcfg = cfg_.restart;
    HpSource source;
    if (cfg_.hp_strategy == HpStrategy::random) rcfg.hp_random_fraction = 1.0;
    if (cfg_.hp_strategy == HpStrategy::global_bo)
      source = [this](std::size_t n, Rng& r) { return global_bo_suggestions(n, r); };
    auto out = perform_restart(pop_, restart_records_, rcfg, space_, *trainable_,
                               cfg_.n_multiplier * cfg_.population_size, cfg_.selection_fraction, next_id_, rng,
                               source);
    pop_ = std::move(out.population);

    step_size_ = grow_step(step_size_, cfg_.step_growth, initial_step_);
    history_.restarts.push_back({outer_step_, iteration_, reason, consumed_, step_size_});
    ++iteration_;
    begin_iteration_bookkeeping();
  }

  void begin_iteration_bookkeeping() {
    t_in_iteration_ = 0;
    iteration_record_begin_ = history_.records.size();
    iteration_start_consumed_ = consumed_;
    traj_.begin_iteration(cfg_.stagnation.scope);
    root_hps_.clear();
    for (const auto& m : pop_) root_hps_[m.id] = m.hps;
  }

  void consider_best(const std::vector<Member>& pop, const char* source) {
    for (const auto& m : pop) {
      if (history_.best.valid && !(m.last_score > history_.best.score)) continue;
      auto& b = history_.best;
      b.valid = true;
      b.score = m.last_score;
      b.member_id = m.id;
      b.outer_step = outer_step_;
      b.hps = m.hps;
      b.weights = m.weights;
      b.source = source;
    }
  }

  void finalize_best() {
    if (history_.best.valid) history_.best.test_score = trainable_->test_score(history_.best.weights);
  }

  static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  nlohmann::json state_to_json() const;
  void state_from_json(const nlohmann::json& j);

  EngineConfig cfg_;
  HyperparameterSpace space_;
  const Trainable* trainable_;

  std::vector<Member> pop_;
  std::size_t initial_step_ = 1;
  std::size_t step_size_ = 1;
  std::size_t consumed_ = 0;
  std::size_t outer_step_ = 0;
  std::size_t iteration_ = 0;
  std::size_t t_in_iteration_ = 0;
  std::size_t iteration_record_begin_ = 0;
  std::size_t iteration_start_consumed_ = 0;
  MemberId next_id_ = 0;
  TrajectoryState traj_;
  std::vector<RestartRecord> restart_records_;
  std::map<MemberId, HPVector> root_hps_;
  RunHistory history_;
};

}  // namespace ipbt

#include "ipbt/serialize.hpp"
