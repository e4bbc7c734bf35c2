#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ipbt/stats.hpp"

using namespace ipbt;
using namespace ipbt::stats;

namespace {

// Trimmed mean written out independently of stats::iqm.
double oracle_iqm(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t cut = v.size() / 4;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = cut; i + cut < v.size(); ++i, ++n) s += v[i];
  return s / static_cast<double>(n);
}

ScoreTable random_table(std::size_t tasks, std::size_t seeds, std::uint64_t seed,
                        const std::vector<std::string>& algs = {"a", "b"}) {
  Rng rng(seed);
  ScoreTable t;
  for (std::size_t k = 0; k < tasks; ++k)
    for (std::size_t a = 0; a < algs.size(); ++a)
      for (std::size_t s = 0; s < seeds; ++s)
        t.add("task" + std::to_string(k), algs[a], static_cast<long long>(s), uniform01(rng) + 0.1 * a);
  return t;
}

// Exact bootstrap p by enumerating every tuple of shared seed indices.
double enumerated_p(const ScoreTable& t, const std::string& a, const std::string& b) {
  const auto tasks = t.tasks();
  const std::size_t n = t.values(tasks[0], a).size();
  auto diff = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> pa, pb;
    for (const auto& task : tasks) {
      const auto va = t.values(task, a), vb = t.values(task, b);
      for (auto i : idx) {
        pa.push_back(va[i]);
        pb.push_back(vb[i]);
      }
    }
    return oracle_iqm(pa) - oracle_iqm(pb);
  };
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const double observed = diff(idx);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= n;
  std::size_t hits = 0;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i, c /= n) idx[i] = c % n;
    if (std::abs(diff(idx) - observed) >= std::abs(observed)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

// --- normalize_per_task ----------------------------------------------------

TEST(Normalize, TwoValuesMapToZeroAndOne) {
  ScoreTable t;
  t.add("x", "a", 0, 0.0);
  t.add("x", "b", 0, 10.0);
  auto n = normalize_per_task(t);
  EXPECT_EQ(n.values("x", "a"), std::vector<double>{0.0});
  EXPECT_EQ(n.values("x", "b"), std::vector<double>{1.0});
}

TEST(Normalize, ShiftInvariant) {
  auto t = random_table(3, 5, 1);
  ScoreTable shifted;
  for (const auto& [task, algs] : t.data())
    for (const auto& [alg, seeds] : algs)
      for (const auto& [seed, v] : seeds) shifted.add(task, alg, seed, v + 123.25);
  auto a = normalize_per_task(t), b = normalize_per_task(shifted);
  for (const auto& task : a.tasks())
    for (const auto& alg : a.algorithms()) {
      auto va = a.values(task, alg), vb = b.values(task, alg);
      for (std::size_t i = 0; i < va.size(); ++i) EXPECT_NEAR(va[i], vb[i], 1e-12);
    }
}

TEST(Normalize, ThreeAlgorithmHandExample) {
  // Task pool {2, 4, 6, 10, 3, 8}: min 2, max 10, so x -> (x - 2) / 8.
  ScoreTable t;
  t.add("x", "a", 0, 2.0);
  t.add("x", "a", 1, 4.0);
  t.add("x", "b", 0, 6.0);
  t.add("x", "b", 1, 10.0);
  t.add("x", "c", 0, 3.0);
  t.add("x", "c", 1, 8.0);
  // Second task is pooled separately: {-1, 1} for every algorithm.
  for (const char* alg : {"a", "b", "c"}) {
    t.add("y", alg, 0, -1.0);
    t.add("y", alg, 1, 1.0);
  }
  auto n = normalize_per_task(t);
  EXPECT_EQ(n.values("x", "a"), (std::vector<double>{0.0, 0.25}));
  EXPECT_EQ(n.values("x", "b"), (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(n.values("x", "c"), (std::vector<double>{0.125, 0.75}));
  EXPECT_EQ(n.values("y", "b"), (std::vector<double>{0.0, 1.0}));
}

TEST(Normalize, ConstantTaskMapsToHalf) {
  ScoreTable t;
  t.add("x", "a", 0, 3.0);
  t.add("x", "b", 0, 3.0);
  t.add("x", "b", 1, 3.0);
  auto n = normalize_per_task(t);
  EXPECT_EQ(n.values("x", "a"), std::vector<double>{0.5});
  EXPECT_EQ(n.values("x", "b"), (std::vector<double>{0.5, 0.5}));
}

// --- iqm -------------------------------------------------------------------

TEST(Iqm, EightValues) { EXPECT_DOUBLE_EQ(iqm({1, 2, 3, 4, 5, 6, 7, 8}), 4.5); }

TEST(Iqm, TenValuesTrimTwoEachSide) { EXPECT_DOUBLE_EQ(iqm({10, 9, 8, 7, 6, 5, 4, 3, 2, 1}), 5.5); }

TEST(Iqm, AllEqual) { EXPECT_DOUBLE_EQ(iqm({0.3, 0.3, 0.3, 0.3, 0.3}), 0.3); }

TEST(Iqm, SmallCountsKeepEverything) {
  EXPECT_DOUBLE_EQ(iqm({7}), 7.0);
  EXPECT_DOUBLE_EQ(iqm({1, 2, 9}), 4.0);
  EXPECT_THROW(iqm({}), std::invalid_argument);
}

TEST(Iqm, MatchesOracleOnRandomLists) {
  Rng rng(3);
  for (std::size_t n = 1; n < 40; ++n) {
    std::vector<double> v(n);
    for (auto& x : v) x = standard_normal(rng);
    EXPECT_NEAR(iqm(v), oracle_iqm(v), 1e-12) << n;
  }
}

// --- stratified bootstrap --------------------------------------------------

TEST(StratifiedBootstrap, ZeroVarianceCollapses) {
  ScoreTable t;
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < 4; ++s) t.add("t" + std::to_string(k), "a", s, 0.7);
  for (auto m : {IntervalMethod::percentile, IntervalMethod::bca}) {
    auto ci = stratified_bootstrap_iqm(t, "a", 1000, 0.95, 1, m);
    EXPECT_DOUBLE_EQ(ci.point, 0.7);
    EXPECT_DOUBLE_EQ(ci.low, 0.7);
    EXPECT_DOUBLE_EQ(ci.high, 0.7);
  }
}

TEST(StratifiedBootstrap, PointInsideInterval) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = normalize_per_task(random_table(4, 8, seed));
    for (auto m : {IntervalMethod::percentile, IntervalMethod::bca}) {
      auto ci = stratified_bootstrap_iqm(t, "a", 2000, 0.95, seed, m);
      EXPECT_LE(ci.low, ci.point);
      EXPECT_GE(ci.high, ci.point);
      EXPECT_LT(ci.low, ci.high);
    }
  }
}

TEST(StratifiedBootstrap, ReplicatesMatchEnumeratedResampleSet) {
  // Two tasks, two seeds each: 2^2 x 2^2 = 16 equally likely resamples.
  ScoreTable t;
  t.add("p", "a", 0, 0.1);
  t.add("p", "a", 1, 0.4);
  t.add("q", "a", 0, 0.8);
  t.add("q", "a", 1, 0.95);
  const std::vector<double> p = {0.1, 0.4}, q = {0.8, 0.95};
  std::map<double, int> mass;
  for (int i0 = 0; i0 < 2; ++i0)
    for (int i1 = 0; i1 < 2; ++i1)
      for (int j0 = 0; j0 < 2; ++j0)
        for (int j1 = 0; j1 < 2; ++j1) ++mass[oracle_iqm({p[i0], p[i1], q[j0], q[j1]})];

  auto four = bootstrap_iqm_replicates(t, "a", 4, 11);
  ASSERT_EQ(four.size(), 4u);
  auto near_member = [&](double x) {
    return std::any_of(mass.begin(), mass.end(), [&](const auto& kv) { return std::abs(kv.first - x) < 1e-12; });
  };
  for (double r : four) EXPECT_TRUE(near_member(r)) << r;

  // Frequencies over many replicates follow the enumerated masses.
  const std::size_t R = 16000;
  auto many = bootstrap_iqm_replicates(t, "a", R, 12);
  for (const auto& [value, count] : mass) {
    const double expect = count / 16.0;
    const auto got = std::count_if(many.begin(), many.end(), [&](double x) { return std::abs(x - value) < 1e-12; });
    const double se = std::sqrt(expect * (1 - expect) / R);
    EXPECT_NEAR(static_cast<double>(got) / R, expect, 5 * se) << value;
  }
}

TEST(StratifiedBootstrap, DeterministicAndThreadInvariant) {
  auto t = normalize_per_task(random_table(3, 8, 5));
  auto a = stratified_bootstrap_iqm(t, "b", 3000, 0.95, 9, IntervalMethod::percentile, 1);
  auto b = stratified_bootstrap_iqm(t, "b", 3000, 0.95, 9, IntervalMethod::percentile, 3);
  EXPECT_EQ(a.low, b.low);
  EXPECT_EQ(a.high, b.high);
  EXPECT_EQ(a.point, b.point);
}

TEST(StratifiedBootstrap, RejectsTooFewReplicates) {
  auto t = random_table(2, 4, 1);
  EXPECT_THROW(stratified_bootstrap_iqm(t, "a", 999, 0.95, 0), std::invalid_argument);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.125), 1.5);
}

// --- paired bootstrap ------------------------------------------------------

TEST(PairedBootstrap, IdenticalAlgorithmsGivePOne) {
  auto t = random_table(2, 5, 7, {"a"});
  ScoreTable both;
  for (const auto& [task, algs] : t.data())
    for (const auto& [seed, v] : algs.at("a")) {
      both.add(task, "a", seed, v);
      both.add(task, "b", seed, v);
    }
  EXPECT_EQ(paired_bootstrap_test(both, "a", "b", 5000, 1), 1.0);
}

TEST(PairedBootstrap, LargeShiftGivesMinimalP) {
  auto t = random_table(3, 6, 8, {"b"});
  ScoreTable both;
  for (const auto& [task, algs] : t.data())
    for (const auto& [seed, v] : algs.at("b")) {
      both.add(task, "b", seed, v);
      both.add(task, "a", seed, v + 1000.0);
    }
  const std::size_t R = 5000;
  EXPECT_DOUBLE_EQ(paired_bootstrap_test(both, "a", "b", R, 2), 1.0 / (R + 1));
  EXPECT_DOUBLE_EQ(paired_bootstrap_test(both, "a", "b", R, 2, Alternative::greater), 1.0 / (R + 1));
  EXPECT_DOUBLE_EQ(paired_bootstrap_test(both, "a", "b", R, 2, Alternative::less), 1.0);
}

TEST(PairedBootstrap, SymmetricInArguments) {
  auto t = normalize_per_task(random_table(3, 6, 9));
  EXPECT_EQ(paired_bootstrap_test(t, "a", "b", 4000, 3), paired_bootstrap_test(t, "b", "a", 4000, 3));
  EXPECT_EQ(paired_bootstrap_test(t, "a", "b", 4000, 3, Alternative::less),
            paired_bootstrap_test(t, "b", "a", 4000, 3, Alternative::greater));
}

TEST(PairedBootstrap, MatchesExhaustiveEnumeration) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    auto t = normalize_per_task(random_table(2, 4, seed));
    const double exact = enumerated_p(t, "a", "b");
    const std::size_t R = 50000;
    const double p = paired_bootstrap_test(t, "a", "b", R, seed);
    const double se = std::sqrt(exact * (1 - exact) / R);
    EXPECT_NEAR(p, exact, 4 * se + 2.0 / R) << "table seed " << seed;
  }
}

TEST(PairedBootstrap, MismatchedSeedsRejected) {
  ScoreTable t;
  t.add("x", "a", 0, 1.0);
  t.add("x", "a", 1, 2.0);
  t.add("x", "b", 0, 1.0);
  EXPECT_THROW(paired_bootstrap_test(t, "a", "b", 100), std::invalid_argument);
  ScoreTable u;
  u.add("x", "a", 0, 1.0);
  u.add("x", "b", 5, 1.0);
  EXPECT_THROW(paired_bootstrap_test(u, "a", "b", 100), std::invalid_argument);
}

TEST(PairedBootstrap, DeterministicAndThreadInvariant) {
  auto t = normalize_per_task(random_table(3, 8, 4));
  auto a = paired_bootstrap(t, "a", "b", 3000, 5, Alternative::two_sided, 1);
  auto b = paired_bootstrap(t, "a", "b", 3000, 5, Alternative::two_sided, 3);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.observed, b.observed);
}

// --- holm ------------------------------------------------------------------

TEST(Holm, ReproducesPublishedTable) {
  const std::vector<double> raw = {0.00002, 0.00002, 0.00004, 0.00012, 0.00022, 0.00810, 0.02070, 0.49701};
  const std::vector<double> expected = {0.00016, 0.00016, 0.00024, 0.00060, 0.00088, 0.02430, 0.04140, 0.49701};
  auto adj = holm_correct(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(adj[i], expected[i], 5e-6) << i;
}

TEST(Holm, OriginalOrderMonotoneAndCapped) {
  const std::vector<double> raw = {0.3, 0.01, 0.04, 0.9, 0.02};
  auto adj = holm_correct(raw);
  // Sorted: 0.01*5, 0.02*4, 0.04*3, 0.3*2, 0.9*1 -> 0.05, 0.08, 0.12, 0.6, 0.9.
  EXPECT_NEAR(adj[1], 0.05, 1e-15);
  EXPECT_NEAR(adj[4], 0.08, 1e-15);
  EXPECT_NEAR(adj[2], 0.12, 1e-15);
  EXPECT_NEAR(adj[0], 0.6, 1e-15);
  EXPECT_NEAR(adj[3], 0.9, 1e-15);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_GE(adj[i], raw[i]);
  auto capped = holm_correct({0.4, 0.5});
  EXPECT_EQ(capped, (std::vector<double>{0.8, 0.8}));
  EXPECT_THROW(holm_correct({1.5}), std::invalid_argument);
}

// --- table I/O and report --------------------------------------------------

TEST(ScoreTableIo, RoundTrip) {
  auto t = random_table(2, 3, 6, {"ipbt", "pbt"});
  std::stringstream ss;
  write_score_table(ss, t);
  EXPECT_EQ(read_score_table(ss), t);
}

TEST(ScoreTableIo, ErrorsNameTheLine) {
  std::stringstream bad("task,algorithm,seed,score\nx,a,0,1.0\nx,a,zero,2.0\n");
  try {
    read_score_table(bad);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::stringstream dup("task,algorithm,seed,score\nx,a,0,1.0\nx,a,0,2.0\n");
  EXPECT_THROW(read_score_table(dup), std::runtime_error);
  std::stringstream noheader("x,a,0,1.0\n");
  EXPECT_THROW(read_score_table(noheader), std::runtime_error);
}

TEST(ComparisonReport, HolmOverAllOthers) {
  auto t = random_table(3, 8, 10, {"ipbt", "pbt", "rs"});
  ComparisonOptions opt;
  opt.ci_replicates = 1000;
  opt.test_replicates = 2000;
  auto r = comparison_report(t, "ipbt", opt);
  ASSERT_EQ(r["tests"].size(), 2u);
  ASSERT_EQ(r["algorithms"].size(), 3u);
  std::vector<double> p;
  for (const auto& x : r["tests"]) p.push_back(x["p"]);
  auto adj = holm_correct(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(r["tests"][i]["p_holm"].get<double>(), adj[i]);
  EXPECT_THROW(comparison_report(t, "asha", opt), std::invalid_argument);
}
