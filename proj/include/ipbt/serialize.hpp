#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "ipbt/engine.hpp"

namespace ipbt {

using nlohmann::json;

inline RestartReason restart_reason_from_string(const std::string& s) {
  for (auto r : {RestartReason::none, RestartReason::no_improvement, RestartReason::slow_improvement,
                 RestartReason::forced})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown restart reason '" + s + "'");
}

inline json hps_to_json(const HPVector& h) { return json(h.values); }

inline HPVector hps_from_json(const json& j, const HyperparameterSpace& space) {
  HPVector h{j.get<std::vector<double>>(), space.id()};
  if (h.size() != space.size()) throw std::runtime_error("HP vector length does not match the space");
  return h;
}

/// HPs keyed by dimension name, for human-facing files.
inline json hps_to_named_json(const HPVector& h, const HyperparameterSpace& space) {
  json o = json::object();
  for (std::size_t i = 0; i < space.size(); ++i) o[space.dim(i).name] = h.values[i];
  return o;
}

inline HPVector hps_from_named_json(const json& o, const HyperparameterSpace& space) {
  HPVector h{std::vector<double>(space.size()), space.id()};
  for (std::size_t i = 0; i < space.size(); ++i) h.values[i] = o.at(space.dim(i).name).get<double>();
  return h;
}

inline json record_to_json(const StepRecord& r, const HyperparameterSpace& space) {
  return json{{"step", r.outer_step},
              {"step_size", r.step_size},
              {"iteration", r.iteration},
              {"t", r.t},
              {"member_id", r.member_id},
              {"lineage_root", r.lineage_root},
              {"parent_id", r.parent_id},
              {"hps", hps_to_named_json(r.hps, space)},
              {"score", r.score},
              {"score_delta", r.score_delta},
              {"restart_flag", r.restart_flag}};
}

inline StepRecord record_from_json(const json& j, const HyperparameterSpace& space) {
  StepRecord r;
  r.outer_step = j.at("step").get<std::size_t>();
  r.step_size = j.at("step_size").get<std::size_t>();
  r.iteration = j.at("iteration").get<std::size_t>();
  r.t = j.at("t").get<std::size_t>();
  r.member_id = j.at("member_id").get<MemberId>();
  r.lineage_root = j.at("lineage_root").get<MemberId>();
  r.parent_id = j.at("parent_id").get<MemberId>();
  r.hps = hps_from_named_json(j.at("hps"), space);
  r.score = j.at("score").get<double>();
  r.score_delta = j.at("score_delta").get<double>();
  r.restart_flag = j.at("restart_flag").get<bool>();
  return r;
}

/// One JSON object per member per outer step.
inline void write_history_jsonl(std::ostream& os, const RunHistory& h, const HyperparameterSpace& space) {
  for (const auto& r : h.records) os << record_to_json(r, space).dump() << '\n';
}

inline std::vector<StepRecord> read_history_jsonl(std::istream& is, const HyperparameterSpace& space) {
  std::vector<StepRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line), space));
    } catch (const std::exception& e) {
      throw std::runtime_error("history line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Run-level facts that are not per-record: restart markers, schedules, best model.
inline json summary_to_json(const RunHistory& h, const HyperparameterSpace& space) {
  json restarts = json::array();
  for (const auto& r : h.restarts)
    restarts.push_back({{"step", r.outer_step},
                        {"iteration", r.iteration},
                        {"reason", to_string(r.reason)},
                        {"consumed", r.consumed},
                        {"next_step_size", r.next_step_size}});
  json best = nullptr;
  if (h.best.valid)
    best = {{"score", h.best.score},
            {"test_score", h.best.test_score},
            {"member_id", h.best.member_id},
            {"step", h.best.outer_step},
            {"hps", hps_to_named_json(h.best.hps, space)},
            {"source", h.best.source}};
  return json{{"optimizer", h.optimizer},
              {"complete", h.complete},
              {"budget", h.budget},
              {"budget_used", h.budget_used},
              {"total_train_steps", h.total_train_steps},
              {"restart_count", h.restarts.size()},
              {"restarts", restarts},
              {"iteration_step_sizes", h.iteration_step_sizes()},
              {"step_schedule", h.step_schedule},
              {"best_so_far", h.best_so_far},
              {"best", best}};
}

inline json engine_config_to_json(const EngineConfig& c) {
  return json{{"population_size", c.population_size},
              {"budget", c.budget},
              {"initial_step_fraction", c.initial_step_fraction},
              {"selection_fraction", c.selection_fraction},
              {"n_multiplier", c.n_multiplier},
              {"step_growth", to_string(c.step_growth)},
              {"seed", c.seed},
              {"restarts_enabled", c.restarts_enabled},
              {"hp_strategy", to_string(c.hp_strategy)},
              {"explore", to_string(c.explore)},
              {"ucb_beta", c.ucb_beta},
              {"ucb_candidates", c.ucb_candidates},
              {"bo_max_records", c.bo_max_records},
              {"perturb_resample_prob", c.perturb_resample_prob},
              {"stagnation",
               {{"t_patience", c.stagnation.t_patience},
                {"t_interval", c.stagnation.t_interval},
                {"min_steps", c.stagnation.min_steps},
                {"min_improvement", c.stagnation.min_improvement},
                {"scope", c.stagnation.scope == StagnationScope::iteration ? "iteration" : "run"},
                {"mode", c.stagnation.mode == StagnationMode::data_driven ? "data_driven" : "bgpbt"},
                {"forced_restart_fraction", c.stagnation.forced_restart_fraction}}},
              {"restart",
               {{"shrink", c.restart.shrink},
                {"perturb", c.restart.perturb},
                {"weight_reinit_fraction", c.restart.weight_reinit_fraction},
                {"hp_random_fraction", c.restart.hp_random_fraction},
                {"meta_beta", c.restart.meta_beta},
                {"meta_candidates", c.restart.meta_candidates}}}};
}

// --- engine checkpoint state ------------------------------------------------

inline json Engine::state_to_json() const {
  json members = json::array();
  for (const auto& m : pop_) {
    json steps = json::array();
    for (const auto& [s, v] : m.scores_by_step) steps.push_back({s, v});
    members.push_back({{"id", m.id},
                       {"hps", hps_to_json(m.hps)},
                       {"lineage_root", m.lineage_root},
                       {"parent_id", m.parent_id},
                       {"last_score", m.last_score},
                       {"scores_by_step", steps}});
  }
  json records = json::array();
  for (const auto& r : restart_records_) {
    json entries = json::array();
    for (const auto& e : r.entries) entries.push_back({hps_to_json(e.initial_hps), e.achieved});
    records.push_back({{"iteration", r.iteration_index}, {"entries", entries}});
  }
  json roots = json::array();
  for (const auto& [id, h] : root_hps_) roots.push_back({id, hps_to_json(h)});
  json history_records = json::array();
  for (const auto& r : history_.records) history_records.push_back(record_to_json(r, space_));
  json restarts = json::array();
  for (const auto& r : history_.restarts)
    restarts.push_back({r.outer_step, r.iteration, to_string(r.reason), r.consumed, r.next_step_size});
  const auto& b = history_.best;
  json best = {{"valid", b.valid}};
  if (b.valid)
    best = {{"valid", true},
            {"score", b.score},
            {"test_score", b.test_score},
            {"member_id", b.member_id},
            {"step", b.outer_step},
            {"hps", hps_to_json(b.hps)},
            {"source", b.source}};

  return json{{"config", engine_config_to_json(cfg_)},
              {"trainable", trainable_->kind()},
              {"space_id", space_.id()},
              {"initial_step", initial_step_},
              {"step_size", step_size_},
              {"consumed", consumed_},
              {"outer_step", outer_step_},
              {"iteration", iteration_},
              {"t_in_iteration", t_in_iteration_},
              {"iteration_record_begin", iteration_record_begin_},
              {"iteration_start_consumed", iteration_start_consumed_},
              {"next_id", next_id_},
              {"traj",
               {{"best_scores", traj_.best_scores},
                {"iteration_start", traj_.iteration_start},
                {"streak", traj_.no_improve_streak}}},
              {"members", members},
              {"restart_records", records},
              {"root_hps", roots},
              {"history",
               {{"optimizer", history_.optimizer},
                {"budget", history_.budget},
                {"budget_used", history_.budget_used},
                {"total_train_steps", history_.total_train_steps},
                {"records", history_records},
                {"restarts", restarts},
                {"step_schedule", history_.step_schedule},
                {"best_so_far", history_.best_so_far},
                {"best", best},
                {"complete", history_.complete}}}};
}

inline void Engine::state_from_json(const json& j) {
  if (j.at("config") != engine_config_to_json(cfg_))
    throw std::runtime_error("checkpoint was written with a different engine configuration");
  if (j.at("trainable").get<std::string>() != trainable_->kind())
    throw std::runtime_error("checkpoint was written for a different trainable");
  if (j.at("space_id").get<std::uint64_t>() != space_.id())
    throw std::runtime_error("checkpoint was written for a different search space");

  initial_step_ = j.at("initial_step").get<std::size_t>();
  step_size_ = j.at("step_size").get<std::size_t>();
  consumed_ = j.at("consumed").get<std::size_t>();
  outer_step_ = j.at("outer_step").get<std::size_t>();
  iteration_ = j.at("iteration").get<std::size_t>();
  t_in_iteration_ = j.at("t_in_iteration").get<std::size_t>();
  iteration_record_begin_ = j.at("iteration_record_begin").get<std::size_t>();
  iteration_start_consumed_ = j.at("iteration_start_consumed").get<std::size_t>();
  next_id_ = j.at("next_id").get<MemberId>();

  const auto& tj = j.at("traj");
  traj_.best_scores = tj.at("best_scores").get<std::vector<double>>();
  traj_.iteration_start = tj.at("iteration_start").get<std::size_t>();
  traj_.no_improve_streak = tj.at("streak").get<int>();

  pop_.clear();
  for (const auto& mj : j.at("members")) {
    Member m;
    m.id = mj.at("id").get<MemberId>();
    m.hps = hps_from_json(mj.at("hps"), space_);
    m.lineage_root = mj.at("lineage_root").get<MemberId>();
    m.parent_id = mj.at("parent_id").get<MemberId>();
    m.last_score = mj.at("last_score").get<double>();
    for (const auto& s : mj.at("scores_by_step")) m.scores_by_step[s.at(0).get<std::size_t>()] = s.at(1).get<double>();
    pop_.push_back(std::move(m));
  }

  restart_records_.clear();
  for (const auto& rj : j.at("restart_records")) {
    RestartRecord r{rj.at("iteration").get<std::size_t>(), {}};
    for (const auto& e : rj.at("entries")) r.entries.push_back({hps_from_json(e.at(0), space_), e.at(1).get<double>()});
    restart_records_.push_back(std::move(r));
  }
  root_hps_.clear();
  for (const auto& r : j.at("root_hps")) root_hps_[r.at(0).get<MemberId>()] = hps_from_json(r.at(1), space_);

  const auto& hj = j.at("history");
  RunHistory h;
  h.optimizer = hj.at("optimizer").get<std::string>();
  h.budget = hj.at("budget").get<std::size_t>();
  h.budget_used = hj.at("budget_used").get<std::size_t>();
  h.total_train_steps = hj.at("total_train_steps").get<std::size_t>();
  for (const auto& r : hj.at("records")) h.records.push_back(record_from_json(r, space_));
  for (const auto& r : hj.at("restarts"))
    h.restarts.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(),
                          restart_reason_from_string(r.at(2).get<std::string>()), r.at(3).get<std::size_t>(),
                          r.at(4).get<std::size_t>()});
  h.step_schedule = hj.at("step_schedule").get<std::vector<std::size_t>>();
  h.best_so_far = hj.at("best_so_far").get<std::vector<double>>();
  const auto& bj = hj.at("best");
  if (bj.at("valid").get<bool>()) {
    h.best.valid = true;
    h.best.score = bj.at("score").get<double>();
    h.best.test_score = bj.at("test_score").get<double>();
    h.best.member_id = bj.at("member_id").get<MemberId>();
    h.best.outer_step = bj.at("step").get<std::size_t>();
    h.best.hps = hps_from_json(bj.at("hps"), space_);
    h.best.source = bj.at("source").get<std::string>();
  }
  h.complete = hj.at("complete").get<bool>();
  history_ = std::move(h);
}

}  // namespace ipbt
