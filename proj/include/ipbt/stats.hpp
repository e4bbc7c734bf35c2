#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "ipbt/random.hpp"

namespace ipbt::stats {

/// task -> algorithm -> seed label -> final score.
class ScoreTable {
 public:
  using SeedScores = std::map<long long, double>;

  void add(const std::string& task, const std::string& algorithm, long long seed, double score) {
    if (!std::isfinite(score)) throw std::invalid_argument("score for " + task + "/" + algorithm + " is not finite");
    auto [it, inserted] = data_[task][algorithm].emplace(seed, score);
    (void)it;
    if (!inserted)
      throw std::invalid_argument("duplicate score for task '" + task + "', algorithm '" + algorithm + "', seed " +
                                  std::to_string(seed));
  }

  bool empty() const { return data_.empty(); }

  std::vector<std::string> tasks() const {
    std::vector<std::string> out;
    for (const auto& [t, _] : data_) out.push_back(t);
    return out;
  }

  /// Algorithms present in any task, sorted.
  std::vector<std::string> algorithms() const {
    std::set<std::string> s;
    for (const auto& [_, algs] : data_)
      for (const auto& [a, __] : algs) s.insert(a);
    return {s.begin(), s.end()};
  }

  bool has(const std::string& task, const std::string& algorithm) const {
    auto t = data_.find(task);
    return t != data_.end() && t->second.count(algorithm) > 0;
  }

  const SeedScores& seeds(const std::string& task, const std::string& algorithm) const {
    auto t = data_.find(task);
    if (t == data_.end()) throw std::invalid_argument("unknown task '" + task + "'");
    auto a = t->second.find(algorithm);
    if (a == t->second.end())
      throw std::invalid_argument("algorithm '" + algorithm + "' has no scores for task '" + task + "'");
    return a->second;
  }

  /// Scores in seed-label order.
  std::vector<double> values(const std::string& task, const std::string& algorithm) const {
    std::vector<double> v;
    for (const auto& [_, x] : seeds(task, algorithm)) v.push_back(x);
    return v;
  }

  /// Every task holds every algorithm with one common seed count.
  void validate() const {
    if (data_.empty()) throw std::invalid_argument("score table is empty");
    const auto algs = algorithms();
    std::size_t n = 0;
    for (const auto& [t, row] : data_) {
      for (const auto& a : algs) {
        auto it = row.find(a);
        if (it == row.end()) throw std::invalid_argument("task '" + t + "' has no scores for algorithm '" + a + "'");
        if (n == 0) n = it->second.size();
        if (it->second.size() != n)
          throw std::invalid_argument("task '" + t + "', algorithm '" + a + "' has " +
                                      std::to_string(it->second.size()) + " seeds, expected " + std::to_string(n));
      }
    }
  }

  const std::map<std::string, std::map<std::string, SeedScores>>& data() const { return data_; }

  bool operator==(const ScoreTable& o) const { return data_ == o.data_; }

 private:
  std::map<std::string, std::map<std::string, SeedScores>> data_;
};

/// CSV with header `task,algorithm,seed,score`. Errors name the line.
inline ScoreTable read_score_table(std::istream& is) {
  ScoreTable t;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (!header) {
      header = true;
      if (cols == std::vector<std::string>{"task", "algorithm", "seed", "score"}) continue;
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected header 'task,algorithm,seed,score'");
    }
    if (cols.size() != 4)
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected 4 columns, got " +
                               std::to_string(cols.size()));
    try {
      std::size_t used = 0;
      const long long seed = std::stoll(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("bad seed '" + cols[2] + "'");
      const double score = std::stod(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument("bad score '" + cols[3] + "'");
      if (cols[0].empty() || cols[1].empty()) throw std::invalid_argument("empty task or algorithm");
      t.add(cols[0], cols[1], seed, score);
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

inline ScoreTable read_score_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score table " + path);
  return read_score_table(in);
}

inline void write_score_table(std::ostream& os, const ScoreTable& t) {
  os << "task,algorithm,seed,score\n";
  os.precision(17);
  for (const auto& [task, algs] : t.data())
    for (const auto& [alg, seeds] : algs)
      for (const auto& [seed, v] : seeds) os << task << ',' << alg << ',' << seed << ',' << v << '\n';
}

/// Min-max over the pooled scores of a task; a constant task maps to 0.5.
inline ScoreTable normalize_per_task(const ScoreTable& t) {
  ScoreTable out;
  for (const auto& [task, algs] : t.data()) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [_, seeds] : algs)
      for (const auto& [__, v] : seeds) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    for (const auto& [alg, seeds] : algs)
      for (const auto& [seed, v] : seeds) out.add(task, alg, seed, hi > lo ? (v - lo) / (hi - lo) : 0.5);
  }
  return out;
}

/// Mean after dropping floor(n/4) values from each end.
inline double iqm(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("iqm of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 4;
  double s = 0.0;
  for (std::size_t i = k; i < v.size() - k; ++i) s += v[i];
  return s / static_cast<double>(v.size() - 2 * k);
}

/// Linear-interpolation quantile of sorted values, q in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty list");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

inline std::vector<std::vector<double>> per_task(const ScoreTable& t, const std::string& algorithm) {
  std::vector<std::vector<double>> out;
  for (const auto& task : t.tasks()) out.push_back(t.values(task, algorithm));
  return out;
}

inline double pooled_iqm(const std::vector<std::vector<double>>& tasks) {
  std::vector<double> pool;
  for (const auto& v : tasks) pool.insert(pool.end(), v.begin(), v.end());
  return iqm(std::move(pool));
}

}  // namespace detail

/// Replicate IQMs of one algorithm: seeds resampled with replacement
/// independently per task, all tasks pooled. Replicate r draws from its own
/// stream keyed by r.
inline std::vector<double> bootstrap_iqm_replicates(const ScoreTable& t, const std::string& algorithm,
                                                    std::size_t replicates, std::uint64_t seed,
                                                    std::size_t threads = 1) {
  const auto data = detail::per_task(t, algorithm);
  std::vector<double> out(replicates);
  parallel_for(replicates, threads, [&](std::size_t r) {
    Rng rng = derive_stream(seed, StreamPurpose::bootstrap, {0, r});
    std::vector<double> pool;
    for (const auto& v : data)
      for (std::size_t i = 0; i < v.size(); ++i) pool.push_back(v[uniform_index(rng, v.size())]);
    out[r] = iqm(std::move(pool));
  });
  return out;
}

enum class IntervalMethod { percentile, bca };

struct IqmInterval {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
};

inline IqmInterval stratified_bootstrap_iqm(const ScoreTable& t, const std::string& algorithm,
                                           std::size_t replicates, double confidence, std::uint64_t seed,
                                           IntervalMethod method = IntervalMethod::percentile,
                                           std::size_t threads = 1) {
  if (replicates < 1000) throw std::invalid_argument("stratified bootstrap needs >= 1000 replicates");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must lie in (0,1)");
  const auto data = detail::per_task(t, algorithm);
  IqmInterval res;
  res.point = detail::pooled_iqm(data);
  auto reps = bootstrap_iqm_replicates(t, algorithm, replicates, seed, threads);
  std::sort(reps.begin(), reps.end());
  const double alpha = 1.0 - confidence;
  double q_low = alpha / 2.0, q_high = 1.0 - alpha / 2.0;

  if (method == IntervalMethod::bca && reps.front() < reps.back()) {
    boost::math::normal_distribution<double> normal;
    // Bias correction; ties count half so a symmetric spike gives z0 = 0.
    const auto below = std::lower_bound(reps.begin(), reps.end(), res.point) - reps.begin();
    const auto upto = std::upper_bound(reps.begin(), reps.end(), res.point) - reps.begin();
    double frac = (static_cast<double>(below) + 0.5 * static_cast<double>(upto - below)) /
                  static_cast<double>(reps.size());
    frac = std::clamp(frac, 0.5 / static_cast<double>(reps.size()), 1.0 - 0.5 / static_cast<double>(reps.size()));
    const double z0 = boost::math::quantile(normal, frac);
    // Acceleration from the leave-one-out jackknife over (task, seed) cells.
    std::vector<double> jack;
    for (std::size_t k = 0; k < data.size(); ++k)
      for (std::size_t i = 0; i < data[k].size(); ++i) {
        auto d = data;
        d[k].erase(d[k].begin() + static_cast<std::ptrdiff_t>(i));
        jack.push_back(detail::pooled_iqm(d));
      }
    double mean = 0.0;
    for (double j : jack) mean += j;
    mean /= static_cast<double>(jack.size());
    double num = 0.0, den = 0.0;
    for (double j : jack) {
      num += std::pow(mean - j, 3);
      den += std::pow(mean - j, 2);
    }
    const double a = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;
    auto adjust = [&](double q) {
      const double z = boost::math::quantile(normal, q);
      return boost::math::cdf(normal, z0 + (z0 + z) / (1.0 - a * (z0 + z)));
    };
    q_low = adjust(q_low);
    q_high = adjust(q_high);
  }
  res.low = quantile_sorted(reps, q_low);
  res.high = quantile_sorted(reps, q_high);
  return res;
}

enum class Alternative {
  two_sided,
  less,     ///< IQM(a) < IQM(b)
  greater,  ///< IQM(a) > IQM(b)
};

namespace detail {

/// Seed count shared by both algorithms across all tasks; seed labels must
/// agree per task so that an index picks the same seed for both.
inline std::size_t paired_seed_count(const ScoreTable& t, const std::string& a, const std::string& b) {
  if (t.empty()) throw std::invalid_argument("score table is empty");
  std::size_t n = 0;
  for (const auto& task : t.tasks()) {
    const auto& sa = t.seeds(task, a);
    const auto& sb = t.seeds(task, b);
    if (sa.size() != sb.size())
      throw std::invalid_argument("task '" + task + "': " + a + " has " + std::to_string(sa.size()) + " seeds, " +
                                  b + " has " + std::to_string(sb.size()));
    for (auto ia = sa.begin(), ib = sb.begin(); ia != sa.end(); ++ia, ++ib)
      if (ia->first != ib->first) throw std::invalid_argument("task '" + task + "': seed labels differ");
    if (n == 0) n = sa.size();
    if (sa.size() != n) throw std::invalid_argument("tasks have different seed counts");
  }
  if (n == 0) throw std::invalid_argument("no seeds to compare");
  return n;
}

inline double indexed_iqm_difference(const std::vector<std::vector<double>>& a,
                                     const std::vector<std::vector<double>>& b,
                                     const std::vector<std::size_t>& idx) {
  std::vector<double> pa, pb;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i : idx) {
      pa.push_back(a[k][i]);
      pb.push_back(b[k][i]);
    }
  return iqm(std::move(pa)) - iqm(std::move(pb));
}

inline bool extreme(double centered, double observed, Alternative alt) {
  switch (alt) {
    case Alternative::two_sided: return std::abs(centered) >= std::abs(observed);
    case Alternative::less: return centered <= observed;
    case Alternative::greater: return centered >= observed;
  }
  return false;
}

}  // namespace detail

/// Observed IQM difference a - b and the bootstrap p-value.
struct PairedTestResult {
  double observed = 0.0;
  double p_value = 1.0;
};

/// Paired stratified bootstrap: each replicate draws one tuple of seed
/// indices and applies it to both algorithms on every task. Replicate
/// differences are centered on the observed difference; p = (count + 1) /
/// (replicates + 1).
inline PairedTestResult paired_bootstrap(const ScoreTable& t, const std::string& a, const std::string& b,
                                         std::size_t replicates, std::uint64_t seed,
                                         Alternative alt = Alternative::two_sided, std::size_t threads = 1) {
  if (replicates < 1) throw std::invalid_argument("paired bootstrap needs >= 1 replicate");
  const std::size_t n = detail::paired_seed_count(t, a, b);
  const auto da = detail::per_task(t, a), db = detail::per_task(t, b);
  std::vector<std::size_t> identity(n);
  for (std::size_t i = 0; i < n; ++i) identity[i] = i;
  PairedTestResult res;
  res.observed = detail::indexed_iqm_difference(da, db, identity);

  std::vector<char> hit(replicates, 0);
  parallel_for(replicates, threads, [&](std::size_t r) {
    Rng rng = derive_stream(seed, StreamPurpose::bootstrap, {1, r});
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, n);
    const double centered = detail::indexed_iqm_difference(da, db, idx) - res.observed;
    hit[r] = detail::extreme(centered, res.observed, alt) ? 1 : 0;
  });
  const auto count = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
  res.p_value = (count + 1.0) / (static_cast<double>(replicates) + 1.0);
  return res;
}

inline double paired_bootstrap_test(const ScoreTable& t, const std::string& a, const std::string& b,
                                    std::size_t replicates = 50000, std::uint64_t seed = 0,
                                    Alternative alt = Alternative::two_sided) {
  return paired_bootstrap(t, a, b, replicates, seed, alt).p_value;
}

/// Holm step-down adjustment, returned in input order.
inline std::vector<double> holm_correct(const std::vector<double>& p) {
  for (double x : p)
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("p-values must lie in [0,1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - j) * p[order[j]]));
    out[order[j]] = running;
  }
  return out;
}

struct ComparisonOptions {
  std::size_t ci_replicates = 10000;
  std::size_t test_replicates = 50000;
  double confidence = 0.95;
  double alpha = 0.05;
  IntervalMethod method = IntervalMethod::percentile;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Normalizes the table, then reports IQM and CI per algorithm and Holm-
/// corrected paired tests of `reference` against every other algorithm.
inline nlohmann::json comparison_report(const ScoreTable& raw, const std::string& reference,
                                        const ComparisonOptions& opt = {}) {
  raw.validate();
  const ScoreTable t = normalize_per_task(raw);
  const auto algs = t.algorithms();
  if (std::find(algs.begin(), algs.end(), reference) == algs.end())
    throw std::invalid_argument("reference algorithm '" + reference + "' not in table");
  nlohmann::json out;
  out["reference"] = reference;
  out["tasks"] = t.tasks();
  out["seeds_per_task"] = t.values(t.tasks().front(), reference).size();
  out["confidence"] = opt.confidence;
  out["interval"] = opt.method == IntervalMethod::bca ? "bca" : "percentile";
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < algs.size(); ++i) {
    auto ci = stratified_bootstrap_iqm(t, algs[i], opt.ci_replicates, opt.confidence, opt.seed + i, opt.method,
                                       opt.threads);
    summary.push_back({{"algorithm", algs[i]}, {"iqm", ci.point}, {"ci_low", ci.low}, {"ci_high", ci.high}});
  }
  out["algorithms"] = summary;

  std::vector<std::string> others;
  std::vector<PairedTestResult> tests;
  for (const auto& a : algs) {
    if (a == reference) continue;
    others.push_back(a);
    tests.push_back(paired_bootstrap(t, reference, a, opt.test_replicates, opt.seed, Alternative::two_sided,
                                     opt.threads));
  }
  std::vector<double> raw_p;
  for (const auto& r : tests) raw_p.push_back(r.p_value);
  const auto adj = holm_correct(raw_p);
  nlohmann::json cmp = nlohmann::json::array();
  for (std::size_t i = 0; i < others.size(); ++i)
    cmp.push_back({{"algorithm", others[i]},
                   {"iqm_difference", tests[i].observed},
                   {"p", raw_p[i]},
                   {"p_holm", adj[i]},
                   {"rejected", adj[i] < opt.alpha}});
  std::stable_sort(cmp.begin(), cmp.end(),
                   [](const nlohmann::json& x, const nlohmann::json& y) { return x["p"] < y["p"]; });
  out["tests"] = cmp;
  return out;
}

}  // namespace ipbt::stats
