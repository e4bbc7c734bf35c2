#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "ipbt/engine.hpp"
#include "ipbt/trainables.hpp"
#include "oracles/ks.hpp"

using namespace ipbt;

namespace {

HyperparameterSpace lr_space() {
  return HyperparameterSpace({Dimension{"learning_rate", DimKind::real, -3.0, 0.0, 10.0}});
}

HyperparameterSpace mlp_space() {
  return HyperparameterSpace({Dimension{"learning_rate", DimKind::real, -3.0, -0.5, 10.0},
                              Dimension{"momentum", DimKind::real, 0.0, 0.95, std::nullopt},
                              Dimension{"weight_decay", DimKind::real, -6.0, -2.0, 10.0}});
}

EngineConfig small_config(std::size_t budget = 100, std::uint64_t seed = 1) {
  EngineConfig c;
  c.population_size = 4;
  c.budget = budget;
  c.seed = seed;
  c.ucb_candidates = 200;
  return c;
}

std::string jsonl(const RunHistory& h, const HyperparameterSpace& space) {
  std::ostringstream os;
  write_history_jsonl(os, h, space);
  os << summary_to_json(h, space).dump() << '\n';
  return os.str();
}

std::size_t records_at(const RunHistory& h, std::size_t step) {
  return static_cast<std::size_t>(
      std::count_if(h.records.begin(), h.records.end(), [&](const StepRecord& r) { return r.outer_step == step; }));
}

}  // namespace

TEST(Engine, InitialStepIsOnePercentOfBudget) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(100);
  c.population_size = 8;
  Engine e(c, space, lc);
  EXPECT_EQ(e.step_size(), 1u);
  e.step();
  EXPECT_EQ(e.history().step_schedule.front(), 1u);
}

TEST(Engine, OverProvisionedFirstStepKeepsBestN) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(200);
  c.population_size = 8;
  Engine e(c, space, lc);
  EXPECT_EQ(e.population().size(), 16u);
  e.step();
  EXPECT_EQ(records_at(e.history(), 0), 16u);
  ASSERT_EQ(e.population().size(), 8u);
  // The kept members are the 8 best of the 16 evaluated ones.
  std::vector<double> scores;
  for (const auto& r : e.history().records) scores.push_back(r.score);
  std::sort(scores.rbegin(), scores.rend());
  std::set<MemberId> kept;
  for (const auto& m : e.population()) kept.insert(m.id);
  for (const auto& r : e.history().records)
    if (r.score > scores[8]) EXPECT_TRUE(kept.count(r.member_id)) << r.member_id;
}

TEST(Engine, PopulationSizeInvariantAcrossRun) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  auto h = Engine(small_config(200), space, lc).run();
  std::set<std::size_t> first_steps{0};
  for (const auto& r : h.restarts) first_steps.insert(r.outer_step + 1);
  for (std::size_t s = 0; s < h.step_schedule.size(); ++s)
    EXPECT_EQ(records_at(h, s), first_steps.count(s) ? 8u : 4u) << "step " << s;
}

TEST(Engine, ExploitReplacesCeilLambdaNWithBitIdenticalCopies) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(400);
  c.population_size = 8;
  c.restarts_enabled = false;
  Engine e(c, space, lc);
  for (int k = 0; k < 6; ++k) {
    const std::size_t step = e.outer_step();
    e.step();
    std::map<MemberId, const StepRecord*> rec;
    for (const auto& r : e.history().records)
      if (r.outer_step == step) rec[r.member_id] = &r;
    std::vector<const Member*> replaced;
    for (const auto& m : e.population()) {
      if (m.parent_id != m.id) replaced.push_back(&m);
      else EXPECT_EQ(m.last_score, rec.at(m.id)->score);
    }
    ASSERT_EQ(replaced.size(), 2u) << "step " << step;
    for (const Member* l : replaced) {
      const Member* w = nullptr;
      for (const auto& m : e.population())
        if (m.id == l->parent_id) w = &m;
      ASSERT_NE(w, nullptr);
      EXPECT_EQ(l->weights, w->weights);
      EXPECT_EQ(l->lineage_root, w->lineage_root);
      EXPECT_EQ(l->last_score, w->last_score);
    }
  }
}

TEST(Engine, BudgetIsConsumedExactly) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  for (std::size_t budget : {37u, 100u, 250u}) {
    auto h = Engine(small_config(budget), space, lc).run();
    std::size_t sum = 0;
    for (auto s : h.step_schedule) sum += s;
    EXPECT_EQ(sum, budget);
    EXPECT_EQ(h.budget_used, budget);
    EXPECT_TRUE(h.complete);
  }
}

TEST(Engine, IterationTimeResetsAfterRestart) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  auto h = Engine(small_config(300), space, lc).run();
  ASSERT_FALSE(h.restarts.empty());
  for (const auto& ev : h.restarts) {
    for (const auto& r : h.records) {
      if (r.outer_step == ev.outer_step) EXPECT_TRUE(r.restart_flag);
      if (r.outer_step == ev.outer_step + 1) {
        EXPECT_EQ(r.t, 0u);
        EXPECT_EQ(r.iteration, ev.iteration + 1);
        EXPECT_EQ(r.lineage_root, r.member_id);
      }
    }
  }
}

TEST(Engine, StepSizeDoublesAtEachRestart) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  auto h = Engine(small_config(300), space, lc).run();
  auto sizes = h.iteration_step_sizes();
  ASSERT_GE(sizes.size(), 2u);
  for (std::size_t i = 1; i < sizes.size(); ++i) EXPECT_EQ(sizes[i], 2 * sizes[i - 1]);
}

TEST(Engine, LinearGrowthAddsInitialStep) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(300);
  c.step_growth = StepGrowth::linear;
  auto h = Engine(c, space, lc).run();
  auto sizes = h.iteration_step_sizes();
  ASSERT_GE(sizes.size(), 2u);
  for (std::size_t i = 0; i < sizes.size(); ++i) EXPECT_EQ(sizes[i], (i + 1) * sizes[0]);
}

TEST(Engine, ForcedRestartInBgpbtMode) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(200);
  c.stagnation.mode = StagnationMode::bgpbt;
  c.stagnation.t_patience = 1000;
  c.stagnation.forced_restart_fraction = 0.25;
  auto h = Engine(c, space, lc).run();
  ASSERT_FALSE(h.restarts.empty());
  EXPECT_EQ(h.restarts.front().reason, RestartReason::forced);
  EXPECT_GE(h.restarts.front().consumed, 50u);
}

TEST(Engine, SeededRunsAreIdentical) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  auto a = Engine(small_config(200, 7), space, lc).run();
  auto b = Engine(small_config(200, 7), space, lc).run();
  EXPECT_EQ(jsonl(a, space), jsonl(b, space));
  auto other = Engine(small_config(200, 8), space, lc).run();
  EXPECT_NE(jsonl(a, space), jsonl(other, space));
}

TEST(Engine, ThreadCountDoesNotChangeResults) {
  auto space = mlp_space();
  TinyMlpParams p;
  p.hidden = 8;
  TinyMlp net(p, space);
  EngineConfig c = small_config(60, 3);
  auto a = Engine(c, space, net).run();
  c.threads = 3;
  auto b = Engine(c, space, net).run();
  EXPECT_EQ(jsonl(a, space), jsonl(b, space));
}

TEST(Engine, BestModelComesFromRestartSnapshotsOrFinalPopulation) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  Engine e(small_config(300), space, lc);
  double candidate_best = -1e300;
  while (!e.done()) {
    const std::size_t restarts_before = e.history().restarts.size();
    e.step();
    const bool restarted = e.history().restarts.size() > restarts_before;
    if (restarted || e.done()) {
      // Scores of the population at the decision point are the records of this step.
      for (const auto& r : e.history().records)
        if (r.outer_step + 1 == e.outer_step()) candidate_best = std::max(candidate_best, r.score);
    }
  }
  const auto& h = e.history();
  ASSERT_TRUE(h.best.valid);
  EXPECT_DOUBLE_EQ(h.best.score, candidate_best);
  EXPECT_DOUBLE_EQ(lc.evaluate(h.best.weights), h.best.score);
  EXPECT_DOUBLE_EQ(h.best.test_score, lc.test_score(h.best.weights));
}

TEST(Engine, CheckpointResumeIsBitIdentical) {
  auto space = mlp_space();
  TinyMlpParams p;
  p.hidden = 6;
  TinyMlp net(p, space);
  EngineConfig c = small_config(80, 4);
  auto full = Engine(c, space, net).run();

  Engine first(c, space, net);
  for (int k = 0; k < 9; ++k) first.step();
  std::stringstream ckpt;
  first.save_checkpoint(ckpt);

  Engine resumed(c, space, net);
  resumed.load_checkpoint(ckpt);
  EXPECT_EQ(resumed.outer_step(), 9u);
  auto rest = resumed.run();
  EXPECT_EQ(jsonl(full, space), jsonl(rest, space));
  EXPECT_EQ(full.best.weights, rest.best.weights);
}

TEST(Engine, CorruptCheckpointLeavesStateUntouched) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  Engine e(small_config(100), space, lc);
  e.step();
  e.step();
  std::stringstream ckpt;
  e.save_checkpoint(ckpt);
  std::string bytes = ckpt.str();

  Engine target(small_config(100), space, lc);
  target.step();
  const std::string before = jsonl(target.history(), space);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x20;
  std::stringstream bad(flipped);
  EXPECT_THROW(target.load_checkpoint(bad), std::runtime_error);
  std::stringstream truncated(bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(target.load_checkpoint(truncated), std::runtime_error);
  EXPECT_EQ(jsonl(target.history(), space), before);
  EXPECT_EQ(target.outer_step(), 1u);

  Engine other_cfg(small_config(100, 99), space, lc);
  std::stringstream good(bytes);
  EXPECT_THROW(other_cfg.load_checkpoint(good), std::runtime_error);
}

TEST(Engine, CheckpointSizeScalesWithWeightDim) {
  auto space = mlp_space();
  std::vector<double> dims, sizes;
  for (std::size_t hidden : {4u, 16u, 64u}) {
    TinyMlpParams p;
    p.hidden = hidden;
    TinyMlp net(p, space);
    Engine e(small_config(50), space, net);
    e.step();
    e.step();
    std::stringstream ckpt;
    e.save_checkpoint(ckpt);
    dims.push_back(static_cast<double>(net.weight_dim()));
    sizes.push_back(static_cast<double>(ckpt.str().size()));
  }
  // N=4 members plus the (still empty) best-model slot: 8 bytes per coordinate each.
  const double slope1 = (sizes[1] - sizes[0]) / (dims[1] - dims[0]);
  const double slope2 = (sizes[2] - sizes[1]) / (dims[2] - dims[1]);
  EXPECT_NEAR(slope1, 8.0 * 4, 8.0 * 4 * 0.05);
  EXPECT_NEAR(slope2, 8.0 * 4, 8.0 * 4 * 0.05);
}

TEST(Engine, AblationStrategiesComplete) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  for (auto s : {HpStrategy::global_bo, HpStrategy::random}) {
    EngineConfig c = small_config(200);
    c.hp_strategy = s;
    auto h = Engine(c, space, lc).run();
    EXPECT_TRUE(h.complete);
    EXPECT_EQ(h.budget_used, 200u);
  }
}

TEST(Engine, RejectsInvalidConfig) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config();
  c.selection_fraction = 0.6;
  EXPECT_THROW(Engine(c, space, lc), std::invalid_argument);
  c = small_config();
  c.n_multiplier = 0;
  EXPECT_THROW(Engine(c, space, lc), std::invalid_argument);
  c = small_config();
  c.initial_step_fraction = 1.0;
  EXPECT_THROW(Engine(c, space, lc), std::invalid_argument);
}

TEST(LineageBest, HandComputedThreeMemberTrace) {
  // Members 0,1,2 start the iteration. After step 0 member 2 (worst) copies
  // member 0, so its later records belong to lineage 0.
  RunHistory h;
  auto add = [&](std::size_t step, MemberId id, MemberId root, double score) {
    StepRecord r;
    r.outer_step = step;
    r.member_id = id;
    r.lineage_root = root;
    r.score = score;
    h.records.push_back(r);
  };
  add(0, 0, 0, 0.5);
  add(0, 1, 1, 0.4);
  add(0, 2, 2, 0.1);
  add(1, 0, 0, 0.6);
  add(1, 1, 1, 0.45);
  add(1, 2, 0, 0.7);
  add(2, 0, 0, 0.65);
  add(2, 1, 1, 0.8);
  add(2, 2, 0, 0.75);
  auto best = lineage_best_scores(h, 0);
  ASSERT_EQ(best.size(), 3u);
  EXPECT_DOUBLE_EQ(best[0], 0.75);
  EXPECT_DOUBLE_EQ(best[1], 0.8);
  EXPECT_DOUBLE_EQ(best[2], 0.1);
}

TEST(LineageBest, NoExploitMeansOwnBest) {
  auto space = lr_space();
  LearningCurve lc({}, space);
  EngineConfig c = small_config(100);
  Engine e(c, space, lc);
  e.step();
  auto best = lineage_best_scores(e.history(), 0);
  for (const auto& r : e.history().records) EXPECT_DOUBLE_EQ(best.at(r.member_id), r.score);
}

TEST(PerturbHps, BoundaryValuesStayInRange) {
  HyperparameterSpace space({Dimension{"learning_rate", DimKind::real, -3.0, 0.0, 10.0},
                             Dimension{"momentum", DimKind::real, 0.0, 0.9, std::nullopt},
                             Dimension{"layers", DimKind::integer, 1.0, 4.0, std::nullopt}});
  Rng rng(1);
  const auto hi = space.make({1.0, 0.9, 4.0});
  const auto lo = space.make({1e-3, 0.0, 1.0});
  for (int i = 0; i < 500; ++i) {
    EXPECT_NO_THROW(space.check(perturb_hps(space, hi, 0.25, rng)));
    EXPECT_NO_THROW(space.check(perturb_hps(space, lo, 0.25, rng)));
  }
  auto p = perturb_hps(space, space.make({0.01, 0.5, 2.0}), 0.0, rng);
  EXPECT_TRUE(std::abs(p.values[0] - 0.012) < 1e-12 || std::abs(p.values[0] - 0.008) < 1e-12);
  EXPECT_TRUE(std::abs(p.values[1] - 0.6) < 1e-12 || std::abs(p.values[1] - 0.4) < 1e-12);
  EXPECT_TRUE(p.values[2] == 1.0 || p.values[2] == 3.0);
}

TEST(PerturbHps, FullResampleMatchesUniformSampler) {
  auto space = lr_space();
  Rng rng(2), other(3);
  const auto h = space.make({0.1});
  std::vector<double> a, b;
  for (int i = 0; i < 1000; ++i) {
    a.push_back(space.normalize(perturb_hps(space, h, 1.0, rng))[0]);
    b.push_back(space.normalize(space.sample_uniform(other))[0]);
  }
  EXPECT_GT(oracle::ks_two_sample_p(a, b), 0.01);
}
