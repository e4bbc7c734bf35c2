#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "ipbt/baselines.hpp"
#include "ipbt/engine.hpp"
#include "ipbt/hpspace.hpp"
#include "ipbt/serialize.hpp"
#include "ipbt/trainables.hpp"

namespace ipbt {

/// Invalid experiment config: schema violation, bad value or bad override.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainableSpec {
  std::string kind;  ///< learning_curve | quadratic_bowl | tiny_mlp
  LearningCurveParams learning_curve;
  QuadraticBowlParams quadratic_bowl;
  TinyMlpParams tiny_mlp;
};

inline std::unique_ptr<Trainable> make_trainable(const TrainableSpec& spec, const HyperparameterSpace& space) {
  if (spec.kind == "learning_curve") return std::make_unique<LearningCurve>(spec.learning_curve, space);
  if (spec.kind == "quadratic_bowl") return std::make_unique<QuadraticBowl>(spec.quadratic_bowl, space);
  if (spec.kind == "tiny_mlp") return std::make_unique<TinyMlp>(spec.tiny_mlp, space);
  throw std::invalid_argument("unknown trainable kind '" + spec.kind + "'");
}

inline const char* to_string(MlpDataset d) { return d == MlpDataset::blobs ? "blobs" : "linear"; }
inline const char* to_string(StagnationScope s) { return s == StagnationScope::iteration ? "iteration" : "run"; }
inline const char* to_string(StagnationMode m) { return m == StagnationMode::data_driven ? "data_driven" : "bgpbt"; }

enum class Optimizer { ipbt, pbt, random_search, asha };

inline const char* to_string(Optimizer o) {
  switch (o) {
    case Optimizer::ipbt: return "ipbt";
    case Optimizer::pbt: return "pbt";
    case Optimizer::random_search: return "random_search";
    case Optimizer::asha: return "asha";
  }
  return "?";
}

/// One experiment: a trainable, a space, an optimizer and the seeds to run.
/// `budget` is inner steps per population slot; random search and ASHA get
/// population_size * budget in total so every optimizer spends the same.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string task;   ///< task label for comparisons; defaults to name
  std::string label;  ///< algorithm label for comparisons; defaults to the optimizer
  Optimizer optimizer = Optimizer::ipbt;
  std::size_t budget = 0;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";
  std::size_t checkpoint_every = 10;  ///< outer steps between checkpoints, 0 = final only
  TrainableSpec trainable;
  std::vector<Dimension> space;
  EngineConfig engine;
  std::size_t rs_n_configs = 0;  ///< 0 -> population_size
  AshaConfig asha;

  std::size_t total_budget() const { return engine.population_size * budget; }

  HyperparameterSpace build_space() const { return HyperparameterSpace(space); }

  EngineConfig engine_config(std::uint64_t seed) const {
    EngineConfig c = engine;
    c.budget = budget;
    c.seed = seed;
    return optimizer == Optimizer::pbt ? pbt_config(c) : c;
  }

  RandomSearchConfig random_search_config(std::uint64_t seed) const {
    RandomSearchConfig c;
    c.budget = total_budget();
    c.n_configs = rs_n_configs == 0 ? engine.population_size : rs_n_configs;
    c.seed = seed;
    c.threads = engine.threads;
    return c;
  }

  AshaConfig asha_config(std::uint64_t seed) const {
    AshaConfig c = asha;
    c.budget = total_budget();
    c.seed = seed;
    return c;
  }
};

namespace config_detail {

class Context {
 public:
  std::set<std::string> overridden;

  std::string where(const YAML::Node& node, const std::string& path) const {
    for (const auto& o : overridden)
      if (path == o || path.rfind(o + ".", 0) == 0 || o.rfind(path + ".", 0) == 0) return "--set " + o;
    if (node.IsDefined() && node.Mark().line >= 0) return "line " + std::to_string(node.Mark().line + 1);
    return "config";
  }

  [[noreturn]] void fail(const YAML::Node& node, const std::string& path, const std::string& msg) const {
    throw ConfigError(where(node, path) + ": " + (path.empty() ? "" : path + ": ") + msg);
  }
};

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <typename T>
T convert(const Context& ctx, const YAML::Node& n, const std::string& path);

template <>
inline std::string convert<std::string>(const Context& ctx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) ctx.fail(n, path, "expected a string");
  return n.Scalar();
}

template <>
inline std::uint64_t convert<std::uint64_t>(const Context& ctx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) ctx.fail(n, path, "expected a non-negative integer");
  const std::string& s = n.Scalar();
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s[0] == '-' || s[0] == '+') throw std::invalid_argument(s);
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    ctx.fail(n, path, "expected a non-negative integer, got '" + s + "'");
  }
  if (used != s.size()) ctx.fail(n, path, "expected a non-negative integer, got '" + s + "'");
  return v;
}

template <>
inline int convert<int>(const Context& ctx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) ctx.fail(n, path, "expected an integer");
  const std::string& s = n.Scalar();
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    ctx.fail(n, path, "expected an integer, got '" + s + "'");
  }
  if (used != s.size()) ctx.fail(n, path, "expected an integer, got '" + s + "'");
  return v;
}

template <>
inline double convert<double>(const Context& ctx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) ctx.fail(n, path, "expected a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    ctx.fail(n, path, "expected a number, got '" + n.Scalar() + "'");
  }
}

template <>
inline bool convert<bool>(const Context& ctx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) ctx.fail(n, path, "expected true or false");
  try {
    return n.as<bool>();
  } catch (const YAML::Exception&) {
    ctx.fail(n, path, "expected true or false, got '" + n.Scalar() + "'");
  }
}

template <typename E>
E convert_enum(const Context& ctx, const YAML::Node& n, const std::string& path, std::initializer_list<E> options) {
  const std::string s = convert<std::string>(ctx, n, path);
  std::string names;
  for (E e : options) {
    if (s == to_string(e)) return e;
    names += (names.empty() ? "" : ", ") + std::string(to_string(e));
  }
  ctx.fail(n, path, "unknown value '" + s + "' (expected one of: " + names + ")");
}

/// Reads a mapping key by key and rejects keys nobody asked for.
class MapReader {
 public:
  MapReader(const Context& ctx, YAML::Node node, std::string path)
      : ctx_(ctx), node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) ctx_.fail(node_, path_, "expected a mapping");
  }

  YAML::Node take(const std::string& key) {
    known_.insert(key);
    const YAML::Node& n = node_;
    return n[key];
  }

  std::string path(const std::string& key) const { return join(path_, key); }
  const YAML::Node& node() const { return node_; }

  template <typename T>
  bool get(const std::string& key, T& out) {
    YAML::Node n = take(key);
    if (!n.IsDefined() || n.IsNull()) return false;
    out = convert<T>(ctx_, n, path(key));
    return true;
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!get(key, out)) missing(key);
  }

  template <typename E>
  bool get_enum(const std::string& key, E& out, std::initializer_list<E> options) {
    YAML::Node n = take(key);
    if (!n.IsDefined() || n.IsNull()) return false;
    out = convert_enum(ctx_, n, path(key), options);
    return true;
  }

  [[noreturn]] void missing(const std::string& key) const {
    ctx_.fail(node_, "", "missing required key '" + path(key) + "'");
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const std::string key = it->first.Scalar();
      if (!known_.count(key)) ctx_.fail(it->first, path(key), "unknown key");
    }
  }

 private:
  const Context& ctx_;
  YAML::Node node_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename Fn>
void validated(const Context& ctx, const YAML::Node& node, const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    ctx.fail(node, path, e.what());
  }
}

inline void read_trainable(const Context& ctx, MapReader& top, TrainableSpec& t) {
  YAML::Node node = top.take("trainable");
  if (!node.IsDefined()) top.missing("trainable");
  MapReader r(ctx, node, "trainable");
  r.require("kind", t.kind);
  YAML::Node params = r.take("params");
  const std::string pp = "trainable.params";
  if (t.kind == "learning_curve") {
    if (params.IsDefined()) {
      MapReader p(ctx, params, pp);
      auto& x = t.learning_curve;
      p.get("ceiling", x.ceiling);
      p.get("ceiling_penalty", x.ceiling_penalty);
      p.get("max_rate", x.max_rate);
      p.get("rate_half_lr", x.rate_half_lr);
      p.get("drift", x.drift);
      p.get("horizon", x.horizon);
      p.get("noise_std", x.noise_std);
      p.get("init_skill", x.init_skill);
      p.finish();
    }
    validated(ctx, node, "trainable", [&] { t.learning_curve.validate(); });
  } else if (t.kind == "quadratic_bowl") {
    if (params.IsDefined()) {
      MapReader p(ctx, params, pp);
      auto& x = t.quadratic_bowl;
      p.get("dim", x.dim);
      p.get("min_curvature", x.min_curvature);
      p.get("condition", x.condition);
      p.get("drift", x.drift);
      p.get("horizon", x.horizon);
      p.get("init_scale", x.init_scale);
      p.get("clamp", x.clamp);
      p.finish();
    }
    validated(ctx, node, "trainable", [&] { t.quadratic_bowl.validate(); });
  } else if (t.kind == "tiny_mlp") {
    if (params.IsDefined()) {
      MapReader p(ctx, params, pp);
      auto& x = t.tiny_mlp;
      p.get("input_dim", x.input_dim);
      p.get("hidden", x.hidden);
      p.get("classes", x.classes);
      p.get("n_train", x.n_train);
      p.get("n_val", x.n_val);
      p.get("n_test", x.n_test);
      p.get("batch_size", x.batch_size);
      p.get_enum("dataset", x.dataset, {MlpDataset::blobs, MlpDataset::linear});
      p.get("blob_std", x.blob_std);
      p.get("bias_init_std", x.bias_init_std);
      p.get("data_seed", x.data_seed);
      p.finish();
    }
    validated(ctx, node, "trainable", [&] { t.tiny_mlp.validate(); });
  } else {
    ctx.fail(r.take("kind"), "trainable.kind",
             "unknown trainable kind '" + t.kind + "' (expected learning_curve, quadratic_bowl or tiny_mlp)");
  }
  r.finish();
}

inline void read_space(const Context& ctx, MapReader& top, std::vector<Dimension>& space) {
  YAML::Node node = top.take("space");
  if (!node.IsDefined()) top.missing("space");
  if (!node.IsSequence() || node.size() == 0) ctx.fail(node, "space", "expected a non-empty list of dimensions");
  space.clear();
  for (std::size_t i = 0; i < node.size(); ++i) {
    const std::string path = "space[" + std::to_string(i) + "]";
    MapReader r(ctx, node[i], path);
    Dimension d;
    r.require("name", d.name);
    r.get_enum("kind", d.kind, {DimKind::real, DimKind::integer});
    r.require("low", d.low);
    r.require("high", d.high);
    double base = 0.0;
    if (r.get("log_base", base)) d.log_base = base;
    r.finish();
    validated(ctx, node[i], path, [&] { d.validate(); });
    space.push_back(d);
  }
  validated(ctx, node, "space", [&] { HyperparameterSpace check(space); });
}

inline void read_engine(const Context& ctx, MapReader& top, EngineConfig& e) {
  YAML::Node node = top.take("engine");
  if (!node.IsDefined()) return;
  MapReader r(ctx, node, "engine");
  r.get("population_size", e.population_size);
  r.get("initial_step_fraction", e.initial_step_fraction);
  r.get("selection_fraction", e.selection_fraction);
  r.get("n_multiplier", e.n_multiplier);
  r.get_enum("step_growth", e.step_growth, {StepGrowth::exponential, StepGrowth::linear, StepGrowth::constant});
  r.get("restarts_enabled", e.restarts_enabled);
  r.get_enum("hp_strategy", e.hp_strategy, {HpStrategy::meta_bo, HpStrategy::global_bo, HpStrategy::random});
  r.get_enum("explore", e.explore, {ExploreMode::bo, ExploreMode::perturb});
  r.get("ucb_beta", e.ucb_beta);
  r.get("ucb_candidates", e.ucb_candidates);
  r.get("bo_max_records", e.bo_max_records);
  r.get("perturb_resample_prob", e.perturb_resample_prob);
  r.get("threads", e.threads);
  if (YAML::Node s = r.take("stagnation"); s.IsDefined()) {
    MapReader sr(ctx, s, "engine.stagnation");
    auto& x = e.stagnation;
    sr.get("t_patience", x.t_patience);
    sr.get("t_interval", x.t_interval);
    sr.get("min_steps", x.min_steps);
    sr.get("min_improvement", x.min_improvement);
    sr.get_enum("scope", x.scope, {StagnationScope::iteration, StagnationScope::run});
    sr.get_enum("mode", x.mode, {StagnationMode::data_driven, StagnationMode::bgpbt});
    sr.get("forced_restart_fraction", x.forced_restart_fraction);
    sr.finish();
  }
  if (YAML::Node s = r.take("restart"); s.IsDefined()) {
    MapReader rr(ctx, s, "engine.restart");
    auto& x = e.restart;
    rr.get("shrink", x.shrink);
    rr.get("perturb", x.perturb);
    rr.get("weight_reinit_fraction", x.weight_reinit_fraction);
    rr.get("hp_random_fraction", x.hp_random_fraction);
    rr.get("meta_beta", x.meta_beta);
    rr.get("meta_candidates", x.meta_candidates);
    rr.finish();
  }
  r.finish();
}

inline ExperimentConfig read_experiment(const Context& ctx, const YAML::Node& root) {
  if (!root.IsDefined() || root.IsNull()) throw ConfigError("config: empty document");
  MapReader top(ctx, root, "");
  ExperimentConfig c;
  top.get("name", c.name);
  top.get_enum("optimizer", c.optimizer,
               {Optimizer::ipbt, Optimizer::pbt, Optimizer::random_search, Optimizer::asha});
  if (!top.get("task", c.task)) c.task = c.name;
  if (!top.get("label", c.label)) c.label = to_string(c.optimizer);
  top.require("budget", c.budget);
  if (c.budget == 0) ctx.fail(top.take("budget"), "budget", "must be >= 1");
  if (YAML::Node s = top.take("seeds"); s.IsDefined()) {
    if (!s.IsSequence() || s.size() == 0) ctx.fail(s, "seeds", "expected a non-empty list of seeds");
    c.seeds.clear();
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto v = convert<std::uint64_t>(ctx, s[i], "seeds[" + std::to_string(i) + "]");
      if (!seen.insert(v).second) ctx.fail(s[i], "seeds", "duplicate seed " + std::to_string(v));
      c.seeds.push_back(v);
    }
  }
  top.get("output_dir", c.output_dir);
  top.get("checkpoint_every", c.checkpoint_every);
  read_trainable(ctx, top, c.trainable);
  read_space(ctx, top, c.space);
  read_engine(ctx, top, c.engine);
  {
    EngineConfig e = c.engine_config(0);
    validated(ctx, root["engine"].IsDefined() ? root["engine"] : root, "engine", [&] { e.validate(); });
  }

  if (YAML::Node s = top.take("random_search"); s.IsDefined()) {
    MapReader r(ctx, s, "random_search");
    r.get("n_configs", c.rs_n_configs);
    r.finish();
  }
  if (c.rs_n_configs == 0) c.rs_n_configs = c.engine.population_size;
  validated(ctx, root, "random_search", [&] { c.random_search_config(0).validate(); });

  c.asha.max_resource = c.budget;
  c.asha.workers = c.engine.population_size;
  bool min_set = false, n_set = false;
  YAML::Node asha_node = top.take("asha");
  if (asha_node.IsDefined()) {
    MapReader r(ctx, asha_node, "asha");
    r.get("eta", c.asha.eta);
    min_set = r.get("min_resource", c.asha.min_resource);
    r.get("max_resource", c.asha.max_resource);
    n_set = r.get("n_configs", c.asha.n_configs);
    r.get("workers", c.asha.workers);
    r.finish();
  }
  // Defaults: rung 0 is about 1/16 of a full training, and the config cap
  // never binds before the budget does.
  if (!min_set) c.asha.min_resource = std::max<std::size_t>(1, c.asha.max_resource / 16);
  if (!n_set) c.asha.n_configs = c.total_budget() / c.asha.min_resource + 1;
  validated(ctx, asha_node.IsDefined() ? asha_node : root, "asha", [&] {
    if (c.optimizer == Optimizer::asha) c.asha_config(0).validate();
  });

  validated(ctx, root["trainable"], "trainable", [&] { make_trainable(c.trainable, c.build_space()); });
  top.finish();
  return c;
}

/// Writes `value` at dotted `path`, creating intermediate mappings.
inline void apply_override(YAML::Node root, const std::string& path, const YAML::Node& value) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("--set " + path + ": empty key segment");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("--set: empty key");
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    } else if (!next.IsMap()) {
      throw ConfigError("--set " + path + ": '" + parts[i] + "' is not a mapping");
    }
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

}  // namespace config_detail

/// Parses YAML text, applying `key.path=value` overrides before validation.
inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::vector<std::string>& overrides = {}) {
  config_detail::Context ctx;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsDefined() || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + o + ": expected key=value");
    const std::string key = o.substr(0, eq);
    YAML::Node value;
    try {
      value = YAML::Load(o.substr(eq + 1));
    } catch (const YAML::ParserException& e) {
      throw ConfigError("--set " + key + ": " + e.msg);
    }
    config_detail::apply_override(root, key, value);
    ctx.overridden.insert(key);
  }
  return config_detail::read_experiment(ctx, root);
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_experiment_config(ss.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Fully explicit YAML: every field, including resolved defaults.
inline std::string to_yaml(const ExperimentConfig& c) {
  // Shortest text that reads back to the same double.
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "task" << YAML::Value << c.task;
  out << YAML::Key << "label" << YAML::Value << c.label;
  out << YAML::Key << "optimizer" << YAML::Value << to_string(c.optimizer);
  out << YAML::Key << "budget" << YAML::Value << c.budget;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir;
  out << YAML::Key << "checkpoint_every" << YAML::Value << c.checkpoint_every;

  out << YAML::Key << "trainable" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << c.trainable.kind;
  out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
  if (c.trainable.kind == "learning_curve") {
    const auto& x = c.trainable.learning_curve;
    out << YAML::Key << "ceiling" << YAML::Value << num(x.ceiling);
    out << YAML::Key << "ceiling_penalty" << YAML::Value << num(x.ceiling_penalty);
    out << YAML::Key << "max_rate" << YAML::Value << num(x.max_rate);
    out << YAML::Key << "rate_half_lr" << YAML::Value << num(x.rate_half_lr);
    out << YAML::Key << "drift" << YAML::Value << num(x.drift);
    out << YAML::Key << "horizon" << YAML::Value << num(x.horizon);
    out << YAML::Key << "noise_std" << YAML::Value << num(x.noise_std);
    out << YAML::Key << "init_skill" << YAML::Value << num(x.init_skill);
  } else if (c.trainable.kind == "quadratic_bowl") {
    const auto& x = c.trainable.quadratic_bowl;
    out << YAML::Key << "dim" << YAML::Value << x.dim;
    out << YAML::Key << "min_curvature" << YAML::Value << num(x.min_curvature);
    out << YAML::Key << "condition" << YAML::Value << num(x.condition);
    out << YAML::Key << "drift" << YAML::Value << num(x.drift);
    out << YAML::Key << "horizon" << YAML::Value << num(x.horizon);
    out << YAML::Key << "init_scale" << YAML::Value << num(x.init_scale);
    out << YAML::Key << "clamp" << YAML::Value << num(x.clamp);
  } else {
    const auto& x = c.trainable.tiny_mlp;
    out << YAML::Key << "input_dim" << YAML::Value << x.input_dim;
    out << YAML::Key << "hidden" << YAML::Value << x.hidden;
    out << YAML::Key << "classes" << YAML::Value << x.classes;
    out << YAML::Key << "n_train" << YAML::Value << x.n_train;
    out << YAML::Key << "n_val" << YAML::Value << x.n_val;
    out << YAML::Key << "n_test" << YAML::Value << x.n_test;
    out << YAML::Key << "batch_size" << YAML::Value << x.batch_size;
    out << YAML::Key << "dataset" << YAML::Value << to_string(x.dataset);
    out << YAML::Key << "blob_std" << YAML::Value << num(x.blob_std);
    out << YAML::Key << "bias_init_std" << YAML::Value << num(x.bias_init_std);
    out << YAML::Key << "data_seed" << YAML::Value << x.data_seed;
  }
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "space" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : c.space) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << d.name;
    out << YAML::Key << "kind" << YAML::Value << to_string(d.kind);
    out << YAML::Key << "low" << YAML::Value << num(d.low);
    out << YAML::Key << "high" << YAML::Value << num(d.high);
    if (d.log_base) out << YAML::Key << "log_base" << YAML::Value << num(*d.log_base);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  const auto& e = c.engine;
  out << YAML::Key << "engine" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "population_size" << YAML::Value << e.population_size;
  out << YAML::Key << "initial_step_fraction" << YAML::Value << num(e.initial_step_fraction);
  out << YAML::Key << "selection_fraction" << YAML::Value << num(e.selection_fraction);
  out << YAML::Key << "n_multiplier" << YAML::Value << e.n_multiplier;
  out << YAML::Key << "step_growth" << YAML::Value << to_string(e.step_growth);
  out << YAML::Key << "restarts_enabled" << YAML::Value << e.restarts_enabled;
  out << YAML::Key << "hp_strategy" << YAML::Value << to_string(e.hp_strategy);
  out << YAML::Key << "explore" << YAML::Value << to_string(e.explore);
  out << YAML::Key << "ucb_beta" << YAML::Value << num(e.ucb_beta);
  out << YAML::Key << "ucb_candidates" << YAML::Value << e.ucb_candidates;
  out << YAML::Key << "bo_max_records" << YAML::Value << e.bo_max_records;
  out << YAML::Key << "perturb_resample_prob" << YAML::Value << num(e.perturb_resample_prob);
  out << YAML::Key << "threads" << YAML::Value << e.threads;
  out << YAML::Key << "stagnation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_patience" << YAML::Value << e.stagnation.t_patience;
  out << YAML::Key << "t_interval" << YAML::Value << e.stagnation.t_interval;
  out << YAML::Key << "min_steps" << YAML::Value << e.stagnation.min_steps;
  out << YAML::Key << "min_improvement" << YAML::Value << num(e.stagnation.min_improvement);
  out << YAML::Key << "scope" << YAML::Value << to_string(e.stagnation.scope);
  out << YAML::Key << "mode" << YAML::Value << to_string(e.stagnation.mode);
  out << YAML::Key << "forced_restart_fraction" << YAML::Value << num(e.stagnation.forced_restart_fraction);
  out << YAML::EndMap;
  out << YAML::Key << "restart" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "shrink" << YAML::Value << num(e.restart.shrink);
  out << YAML::Key << "perturb" << YAML::Value << num(e.restart.perturb);
  out << YAML::Key << "weight_reinit_fraction" << YAML::Value << num(e.restart.weight_reinit_fraction);
  out << YAML::Key << "hp_random_fraction" << YAML::Value << num(e.restart.hp_random_fraction);
  out << YAML::Key << "meta_beta" << YAML::Value << num(e.restart.meta_beta);
  out << YAML::Key << "meta_candidates" << YAML::Value << e.restart.meta_candidates;
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "random_search" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n_configs" << YAML::Value << c.rs_n_configs;
  out << YAML::EndMap;
  out << YAML::Key << "asha" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "eta" << YAML::Value << c.asha.eta;
  out << YAML::Key << "min_resource" << YAML::Value << c.asha.min_resource;
  out << YAML::Key << "max_resource" << YAML::Value << c.asha.max_resource;
  out << YAML::Key << "n_configs" << YAML::Value << c.asha.n_configs;
  out << YAML::Key << "workers" << YAML::Value << c.asha.workers;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_yaml(a) == to_yaml(b); }

}  // namespace ipbt
