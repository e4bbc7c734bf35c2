#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipbt/baselines.hpp"
#include "ipbt/config.hpp"
#include "ipbt/engine.hpp"
#include "ipbt/serialize.hpp"
#include "ipbt/stats.hpp"

namespace ipbt::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

inline constexpr const char* kOutputRootEnv = "IPBT_OUTPUT_ROOT";

/// Output root from the environment, else the working directory.
inline fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

inline fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& root) {
  return root / cfg.output_dir / cfg.name / ("seed_" + std::to_string(seed));
}

inline void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;  ///< run only this seed
  std::size_t parallel_seeds = 1;
  bool resume = false;  ///< continue from an existing engine checkpoint
  std::optional<fs::path> root;
};

namespace detail {

inline nlohmann::json summary_record(const ExperimentConfig& cfg, std::uint64_t seed, const RunHistory& h,
                                     const HyperparameterSpace& space) {
  nlohmann::json s = summary_to_json(h, space);
  s["task"] = cfg.task;
  s["algorithm"] = cfg.label;
  s["seed"] = seed;
  if (cfg.optimizer == Optimizer::ipbt || cfg.optimizer == Optimizer::pbt) {
    s["config"] = engine_config_to_json(cfg.engine_config(seed));
    s["config"]["initial_step"] = cfg.engine_config(seed).initial_step();
  } else if (cfg.optimizer == Optimizer::random_search) {
    const auto rs = cfg.random_search_config(seed);
    s["config"] = {{"budget", rs.budget}, {"n_configs", rs.n_configs}};
  } else {
    const auto a = cfg.asha_config(seed);
    s["config"] = {{"budget", a.budget},       {"eta", a.eta},         {"min_resource", a.min_resource},
                   {"max_resource", a.max_resource}, {"n_configs", a.n_configs}, {"workers", a.workers}};
  }
  return s;
}

inline void append_records(std::ofstream& os, const RunHistory& h, std::size_t& written,
                           const HyperparameterSpace& space) {
  for (; written < h.records.size(); ++written) os << record_to_json(h.records[written], space).dump() << '\n';
  os.flush();
}

/// One seed; throws on failure after marking the summary incomplete.
inline void run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, bool resume) {
  fs::create_directories(dir);
  const HyperparameterSpace space = cfg.build_space();
  const auto trainable = make_trainable(cfg.trainable, space);
  write_text(dir / "config.yaml", to_yaml(cfg));
  const fs::path history_path = dir / "history.jsonl";
  const fs::path summary_path = dir / "summary.json";
  const fs::path ckpt_path = dir / "checkpoint.bin";

  auto finish = [&](const RunHistory& h, const std::string& error) {
    nlohmann::json s = summary_record(cfg, seed, h, space);
    if (!error.empty()) {
      s["complete"] = false;
      s["error"] = error;
    }
    write_text(summary_path, s.dump(2) + "\n");
  };

  if (cfg.optimizer == Optimizer::ipbt || cfg.optimizer == Optimizer::pbt) {
    Engine engine(cfg.engine_config(seed), space, *trainable, to_string(cfg.optimizer));
    if (resume && fs::exists(ckpt_path)) engine.load_checkpoint(ckpt_path.string());
    std::ofstream hist(history_path, std::ios::binary | std::ios::trunc);
    if (!hist) throw std::runtime_error("cannot write " + history_path.string());
    std::size_t written = 0;
    try {
      append_records(hist, engine.history(), written, space);
      while (!engine.done()) {
        engine.step();
        append_records(hist, engine.history(), written, space);
        if (cfg.checkpoint_every > 0 && engine.outer_step() % cfg.checkpoint_every == 0) {
          engine.save_checkpoint(ckpt_path.string() + ".tmp");
          fs::rename(ckpt_path.string() + ".tmp", ckpt_path);
        }
      }
      engine.save_checkpoint(ckpt_path.string() + ".tmp");
      fs::rename(ckpt_path.string() + ".tmp", ckpt_path);
    } catch (const std::exception& e) {
      finish(engine.history(), e.what());
      throw;
    }
    finish(engine.history(), "");
    return;
  }

  RunHistory h;
  h.optimizer = to_string(cfg.optimizer);
  try {
    h = cfg.optimizer == Optimizer::random_search
            ? run_random_search(cfg.random_search_config(seed), space, *trainable)
            : run_asha(cfg.asha_config(seed), space, *trainable);
  } catch (const std::exception& e) {
    finish(h, e.what());
    throw;
  }
  std::ofstream hist(history_path, std::ios::binary | std::ios::trunc);
  write_history_jsonl(hist, h, space);
  if (!hist) throw std::runtime_error("failed writing " + history_path.string());
  finish(h, "");
}

}  // namespace detail

/// Runs every seed of an experiment; one output directory per seed.
inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(opt.config_path, opt.overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  if (opt.parallel_seeds < 1) {
    err << "config error: --parallel-seeds must be >= 1\n";
    return kConfigError;
  }
  const std::vector<std::uint64_t> seeds = opt.seed ? std::vector<std::uint64_t>{*opt.seed} : cfg.seeds;
  const fs::path root = opt.root.value_or(output_root());

  std::mutex io;
  std::vector<int> status(seeds.size(), kOk);
  parallel_for(seeds.size(), opt.parallel_seeds, [&](std::size_t i) {
    const fs::path dir = seed_dir(cfg, seeds[i], root);
    try {
      detail::run_seed(cfg, seeds[i], dir, opt.resume);
      std::lock_guard lock(io);
      out << cfg.name << " seed " << seeds[i] << ": done -> " << dir.string() << '\n';
    } catch (const std::exception& e) {
      status[i] = kRuntimeError;
      std::lock_guard lock(io);
      err << cfg.name << " seed " << seeds[i] << ": failed: " << e.what() << '\n';
    }
  });
  for (int s : status)
    if (s != kOk) return kRuntimeError;
  return kOk;
}

struct CompareOptions {
  std::vector<std::string> inputs;  ///< run directories, summary.json files or score-table CSVs
  std::string reference = "ipbt";
  std::vector<std::string> algorithms;  ///< empty = all
  stats::ComparisonOptions stats;
  std::optional<fs::path> out_dir;
  std::vector<double> p_values;  ///< Holm-only mode when non-empty
  std::vector<std::string> names;
};

namespace detail {

inline void add_summary(stats::ScoreTable& t, const fs::path& path, std::ostream& err) {
  const auto j = nlohmann::json::parse(read_text(path));
  if (!j.value("complete", false)) {
    err << "skipping incomplete run " << path.string() << '\n';
    return;
  }
  if (j.at("best").is_null()) throw std::runtime_error(path.string() + ": run has no best model");
  t.add(j.at("task").get<std::string>(), j.at("algorithm").get<std::string>(), j.at("seed").get<long long>(),
        j.at("best").at("test_score").get<double>());
}

inline void merge(stats::ScoreTable& into, const stats::ScoreTable& from) {
  for (const auto& [task, algs] : from.data())
    for (const auto& [alg, seeds] : algs)
      for (const auto& [seed, v] : seeds) into.add(task, alg, seed, v);
}

/// (task, algorithm, seed) cells present for some algorithm but not another.
inline std::vector<std::string> missing_cells(const stats::ScoreTable& t) {
  std::vector<std::string> out;
  const auto algs = t.algorithms();
  for (const auto& [task, row] : t.data()) {
    std::set<long long> seeds;
    for (const auto& [_, s] : row)
      for (const auto& [seed, __] : s) seeds.insert(seed);
    for (const auto& a : algs)
      for (long long s : seeds)
        if (!row.count(a) || !row.at(a).count(s))
          out.push_back("(" + task + ", " + a + ", " + std::to_string(s) + ")");
  }
  return out;
}

inline std::string fixed(double v, int digits = 5) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

inline std::string holm_table(const std::vector<std::string>& names, const std::vector<double>& p,
                              const std::vector<double>& adj, double alpha) {
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::size_t w = 11;
  for (const auto& n : names) w = std::max(w, n.size() + 2);
  std::ostringstream os;
  os << pad("Algorithm", w) << pad("Rejected H0", 13) << pad("p", 9) << "p (Holm)\n";
  for (auto i : order)
    os << pad(names[i], w) << pad(adj[i] < alpha ? "Yes" : "No", 13) << pad(fixed(p[i]), 9) << fixed(adj[i]) << '\n';
  return os.str();
}

inline std::string report_text(const nlohmann::json& r, const stats::ComparisonOptions& opt) {
  std::ostringstream os;
  os << "reference: " << r["reference"].get<std::string>() << '\n';
  os << "tasks:";
  for (const auto& t : r["tasks"]) os << ' ' << t.get<std::string>();
  os << " (" << r["seeds_per_task"].get<std::size_t>() << " seeds each)\n\n";
  os << "normalized IQM, " << fixed(100 * opt.confidence, 0) << "% " << r["interval"].get<std::string>()
     << " CI over " << opt.ci_replicates << " stratified bootstrap replicates\n";
  std::size_t w = 11;
  for (const auto& a : r["algorithms"]) w = std::max(w, a["algorithm"].get<std::string>().size() + 2);
  os << pad("algorithm", w) << pad("IQM", 9) << pad("CI low", 9) << "CI high\n";
  for (const auto& a : r["algorithms"])
    os << pad(a["algorithm"].get<std::string>(), w) << pad(fixed(a["iqm"]), 9) << pad(fixed(a["ci_low"]), 9)
       << fixed(a["ci_high"]) << '\n';
  if (r["tests"].empty()) {
    os << "\nno comparisons: a single algorithm\n";
    return os.str();
  }
  os << "\npaired bootstrap vs " << r["reference"].get<std::string>() << ", " << opt.test_replicates
     << " replicates, Holm correction at alpha " << opt.alpha << '\n';
  std::vector<std::string> names;
  std::vector<double> p, adj;
  for (const auto& t : r["tests"]) {
    names.push_back(t["algorithm"]);
    p.push_back(t["p"]);
    adj.push_back(t["p_holm"]);
  }
  os << holm_table(names, p, adj, opt.alpha);
  return os.str();
}

}  // namespace detail

/// Builds the score table from run outputs and writes report.json/report.txt.
inline int cmd_compare(const CompareOptions& opt, std::ostream& out, std::ostream& err) {
  const fs::path dir = opt.out_dir.value_or(output_root() / "compare");
  if (!opt.p_values.empty()) {
    std::vector<std::string> names = opt.names;
    if (names.empty())
      for (std::size_t i = 0; i < opt.p_values.size(); ++i) names.push_back("test" + std::to_string(i + 1));
    if (names.size() != opt.p_values.size()) {
      err << "config error: --names needs one name per p-value\n";
      return kConfigError;
    }
    try {
      const auto adj = stats::holm_correct(opt.p_values);
      const std::string text = detail::holm_table(names, opt.p_values, adj, opt.stats.alpha);
      fs::create_directories(dir);
      write_text(dir / "holm.txt", text);
      out << text;
    } catch (const std::invalid_argument& e) {
      err << "config error: " << e.what() << '\n';
      return kConfigError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kRuntimeError;
    }
    return kOk;
  }

  stats::ScoreTable table;
  try {
    for (const auto& in : opt.inputs) {
      const fs::path p(in);
      if (fs::is_directory(p)) {
        std::vector<fs::path> found;
        for (const auto& e : fs::recursive_directory_iterator(p))
          if (e.is_regular_file() && e.path().filename() == "summary.json") found.push_back(e.path());
        std::sort(found.begin(), found.end());
        for (const auto& f : found) detail::add_summary(table, f, err);
      } else if (p.extension() == ".csv") {
        detail::merge(table, stats::read_score_table(p.string()));
      } else if (p.filename() == "summary.json") {
        detail::add_summary(table, p, err);
      } else {
        throw std::runtime_error("cannot use input " + in + " (expected a directory, summary.json or .csv)");
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  if (!opt.algorithms.empty()) {
    stats::ScoreTable kept;
    for (const auto& [task, algs] : table.data())
      for (const auto& [alg, seeds] : algs)
        if (std::find(opt.algorithms.begin(), opt.algorithms.end(), alg) != opt.algorithms.end())
          for (const auto& [seed, v] : seeds) kept.add(task, alg, seed, v);
    table = kept;
  }
  if (table.empty()) {
    err << "error: no scores found\n";
    return kRuntimeError;
  }
  const auto missing = detail::missing_cells(table);
  if (!missing.empty()) {
    err << "error: seeds are not aligned across algorithms; missing cells:\n";
    for (const auto& m : missing) err << "  " << m << '\n';
    return kConfigError;
  }
  try {
    const auto report = stats::comparison_report(table, opt.reference, opt.stats);
    const std::string text = detail::report_text(report, opt.stats);
    fs::create_directories(dir);
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(dir / "report.txt", text);
    std::ofstream csv(dir / "scores.csv", std::ios::trunc);
    stats::write_score_table(csv, table);
    out << text;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

struct PlotdataOptions {
  std::string run_dir;  ///< a seed directory written by `run`
  std::optional<fs::path> out_dir;
};

namespace detail {

struct PlainRecord {
  std::size_t step, iteration, step_size;
  std::uint64_t member, parent;
  double score;
  nlohmann::json hps;
};

/// Records of the best model's ancestry, oldest first: each step's weights
/// came from the record's parent at the step before.
inline std::vector<PlainRecord> best_lineage(const std::vector<PlainRecord>& recs, std::uint64_t member,
                                             std::size_t step, bool engine_history) {
  std::vector<PlainRecord> out;
  if (!engine_history) {
    for (const auto& r : recs)
      if (r.member == member) out.push_back(r);
    return out;
  }
  std::map<std::pair<std::size_t, std::uint64_t>, const PlainRecord*> at;
  for (const auto& r : recs) at[{r.step, r.member}] = &r;
  std::optional<std::uint64_t> cur = member;
  for (std::size_t s = step + 1; s-- > 0 && cur;) {
    auto it = at.find({s, *cur});
    if (it == at.end()) break;
    out.push_back(*it->second);
    cur = it->second->parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Writes best_score.csv, restarts.csv and hp_schedule.csv for a run.
inline int cmd_plotdata(const PlotdataOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const fs::path run(opt.run_dir);
    const fs::path dir = opt.out_dir.value_or(run / "plotdata");
    const auto summary = nlohmann::json::parse(read_text(run / "summary.json"));
    std::vector<detail::PlainRecord> recs;
    {
      std::istringstream hist(read_text(run / "history.jsonl"));
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(hist, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
          const auto j = nlohmann::json::parse(line);
          recs.push_back({j.at("step"), j.at("iteration"), j.at("step_size"), j.at("member_id"), j.at("parent_id"),
                          j.at("score"), j.at("hps")});
        } catch (const std::exception& e) {
          throw std::runtime_error("history line " + std::to_string(lineno) + ": " + e.what());
        }
      }
    }
    fs::create_directories(dir);

    std::set<std::size_t> restart_steps;
    std::ostringstream rs;
    rs << "step,iteration,reason,consumed,next_step_size\n";
    for (const auto& r : summary.at("restarts")) {
      restart_steps.insert(r.at("step").get<std::size_t>());
      rs << r.at("step").get<std::size_t>() << ',' << r.at("iteration").get<std::size_t>() << ','
         << r.at("reason").get<std::string>() << ',' << r.at("consumed").get<std::size_t>() << ','
         << r.at("next_step_size").get<std::size_t>() << '\n';
    }
    write_text(dir / "restarts.csv", rs.str());

    const std::string optimizer = summary.at("optimizer");
    const bool engine_history = optimizer == "ipbt" || optimizer == "pbt";
    const auto schedule = summary.at("step_schedule").get<std::vector<std::size_t>>();
    const auto best = summary.at("best_so_far").get<std::vector<double>>();
    std::ostringstream bs;
    bs.precision(17);
    bs << "step,consumed,step_size,best_score,restart\n";
    std::size_t consumed = 0;
    for (std::size_t s = 0; s < best.size() && s < schedule.size(); ++s) {
      consumed += schedule[s];
      bs << s << ',' << consumed << ',' << schedule[s] << ',' << best[s] << ','
         << (restart_steps.count(s) ? 1 : 0) << '\n';
    }
    write_text(dir / "best_score.csv", bs.str());

    std::vector<detail::PlainRecord> lineage;
    std::vector<std::string> hp_names;
    if (!summary.at("best").is_null()) {
      const auto& b = summary.at("best");
      lineage = detail::best_lineage(recs, b.at("member_id"), b.at("step"), engine_history);
      for (const auto& [k, _] : b.at("hps").items()) hp_names.push_back(k);
    }
    std::ostringstream hs;
    hs.precision(17);
    hs << "step,iteration,step_size,member_id,score";
    for (const auto& n : hp_names) hs << ',' << n;
    hs << '\n';
    for (const auto& r : lineage) {
      hs << r.step << ',' << r.iteration << ',' << r.step_size << ',' << r.member << ',' << r.score;
      for (const auto& n : hp_names) hs << ',' << r.hps.at(n).get<double>();
      hs << '\n';
    }
    write_text(dir / "hp_schedule.csv", hs.str());
    out << "plot data -> " << dir.string() << " (" << best.size() << " steps, " << restart_steps.size()
        << " restarts, lineage of " << lineage.size() << ")\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace ipbt::cli
