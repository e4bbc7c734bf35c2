#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ipbt/hpspace.hpp"
#include "ipbt/random.hpp"

namespace ipbt::gp {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A GP input: a point in the unit cube and a time index.
struct Input {
  std::vector<double> x;
  double t = 0.0;
};

struct KernelParams {
  double signal_variance = 1.0;
  std::vector<double> lengthscales;
  double noise_variance = 1e-2;
  double epsilon = 0.1;  ///< temporal forgetting rate in [0, 1)

  void validate() const {
    if (!(signal_variance > 0.0) || !(noise_variance > 0.0))
      throw std::invalid_argument("kernel variances must be positive");
    for (double l : lengthscales)
      if (!(l > 0.0)) throw std::invalid_argument("lengthscales must be positive");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in [0,1)");
  }
};

struct Range {
  double lo;
  double hi;
};

/// Search box for marginal-likelihood fitting. Every parameter is searched in
/// log space.
struct KernelBounds {
  Range signal_variance{0.05, 20.0};
  Range lengthscale{0.01, 10.0};
  Range noise_variance{1e-6, 1.0};
  Range epsilon{1e-3, 0.5};
  bool fit_epsilon = true;
  double fixed_epsilon = 0.1;  ///< used when fit_epsilon is false
};

struct FitOptions {
  int restarts = 8;
  int iterations = 50;        ///< likelihood evaluations per restart
  int line_search_evals = 6;  ///< golden-section evaluations per coordinate visit
};

inline double matern52(const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& lengthscales) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = (a[i] - b[i]) / lengthscales[i];
    r2 += d * d;
  }
  double s = std::sqrt(5.0 * r2);
  return (1.0 + s + 5.0 * r2 / 3.0) * std::exp(-s);
}

inline double temporal_decay(double dt, double epsilon) {
  if (epsilon == 0.0) return 1.0;
  return std::exp(std::log1p(-epsilon) * std::abs(dt) / 2.0);
}

/// signal_variance * Matern52(x) * (1 - epsilon)^(|dt| / 2)
inline double kernel(const Input& a, const Input& b, const KernelParams& p) {
  if (a.x.size() != b.x.size() || a.x.size() != p.lengthscales.size())
    throw std::invalid_argument("kernel: dimension mismatch");
  return p.signal_variance * matern52(a.x, b.x, p.lengthscales) * temporal_decay(a.t - b.t, p.epsilon);
}

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct FitDiagnostics {
  std::vector<double> start_log_likelihoods;
  double final_log_likelihood = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

namespace detail {

inline Eigen::MatrixXd gram(const std::vector<Input>& xs, const KernelParams& p) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = p.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = kernel(xs[i], xs[j], p);
  }
  return k;
}

struct Factor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

/// Cholesky of K + noise*I, escalating diagonal jitter from 1e-10 * sv by
/// x10 per retry, at most six retries.
inline Factor factorize(const Eigen::MatrixXd& k, const KernelParams& p) {
  const auto n = k.rows();
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 6; ++attempt) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += p.noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      if (l.allFinite() && (n == 0 || l.diagonal().minCoeff() > 0.0)) return {std::move(l), jitter};
    }
    jitter = attempt == 0 ? 1e-10 * p.signal_variance : jitter * 10.0;
  }
  throw NumericalError("Cholesky factorization failed after jitter escalation");
}

}  // namespace detail

class Model {
 public:
  Model() = default;

  /// Zero-data model: prior mean 0, prior variance signal_variance.
  static Model prior(KernelParams params) {
    params.validate();
    Model m;
    m.params_ = std::move(params);
    m.alpha_ = Eigen::VectorXd(0);
    m.lower_ = Eigen::MatrixXd(0, 0);
    m.log_likelihood_ = 0.0;
    return m;
  }

  /// Exact posterior for fixed kernel parameters. Targets are standardized
  /// internally (zero mean, unit population variance) unless they are
  /// constant, in which case only the mean is removed.
  static Model condition(std::vector<Input> inputs, const std::vector<double>& targets, KernelParams params) {
    if (inputs.empty()) throw std::invalid_argument("GP needs at least one point");
    if (inputs.size() != targets.size()) throw std::invalid_argument("GP inputs/targets size mismatch");
    params.validate();
    Model m;
    m.params_ = std::move(params);
    m.inputs_ = std::move(inputs);
    m.standardize(targets);
    m.refactor();
    return m;
  }

  const KernelParams& params() const { return params_; }
  std::size_t size() const { return inputs_.size(); }
  bool degenerate() const { return degenerate_; }
  double log_marginal_likelihood() const { return log_likelihood_; }
  double target_offset() const { return y_offset_; }
  double target_scale() const { return y_scale_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  const std::vector<double>& standardized_targets() const { return y_; }

  double standardize_value(double y) const { return (y - y_offset_) / y_scale_; }
  double destandardize_value(double z) const { return z * y_scale_ + y_offset_; }

  Prediction predict(const Input& q) const { return predict_batch({q}).front(); }

  std::vector<Prediction> predict_batch(const std::vector<Input>& queries) const {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    const auto m = static_cast<Eigen::Index>(queries.size());
    std::vector<Prediction> out(queries.size());
    if (n == 0) {
      for (auto& p : out) p = {y_offset_, params_.signal_variance * y_scale_ * y_scale_};
      return out;
    }
    Eigen::MatrixXd kstar(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) kstar(i, j) = kernel(inputs_[i], queries[j], params_);
    Eigen::VectorXd mean = kstar.transpose() * alpha_;
    lower_.triangularView<Eigen::Lower>().solveInPlace(kstar);
    for (Eigen::Index j = 0; j < m; ++j) {
      double var = params_.signal_variance - kstar.col(j).squaredNorm();
      out[j].mean = destandardize_value(mean(j));
      out[j].variance = std::max(0.0, var) * y_scale_ * y_scale_;
    }
    return out;
  }

 private:
  friend Model fit(std::vector<Input>, const std::vector<double>&, const KernelBounds&, Rng&, const FitOptions&);

  void standardize(const std::vector<double>& targets) {
    const double n = static_cast<double>(targets.size());
    double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
    double ss = 0.0;
    for (double y : targets) {
      if (!std::isfinite(y)) throw std::invalid_argument("GP targets must be finite");
      ss += (y - mean) * (y - mean);
    }
    double sd = std::sqrt(ss / n);
    degenerate_ = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    y_offset_ = mean;
    y_scale_ = degenerate_ ? 1.0 : sd;
    y_.resize(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) y_[i] = degenerate_ ? 0.0 : (targets[i] - mean) / sd;
  }

  void refactor() {
    auto k = detail::gram(inputs_, params_);
    auto f = detail::factorize(k, params_);
    lower_ = std::move(f.lower);
    jitter_ = f.jitter;
    Eigen::Map<const Eigen::VectorXd> y(y_.data(), static_cast<Eigen::Index>(y_.size()));
    alpha_ = lower_.triangularView<Eigen::Lower>().solve(y);
    double quad = alpha_.squaredNorm();
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha_);
    double logdet = 2.0 * lower_.diagonal().array().log().sum();
    const double n = static_cast<double>(y_.size());
    log_likelihood_ = -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
  }

  KernelParams params_;
  std::vector<Input> inputs_;
  std::vector<double> y_;
  double y_offset_ = 0.0;
  double y_scale_ = 1.0;
  bool degenerate_ = false;
  Eigen::MatrixXd lower_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  double log_likelihood_ = 0.0;
  FitDiagnostics diagnostics_;
};

namespace detail {

// Packs the fitted parameters as log values:
// [log sv, log ls_1..d, log noise, (log eps)].
struct ParamCodec {
  std::size_t dims;
  const KernelBounds& bounds;

  std::size_t count() const { return dims + 2 + (bounds.fit_epsilon ? 1 : 0); }

  Range range(std::size_t i) const {
    auto lg = [](Range r) { return Range{std::log(r.lo), std::log(r.hi)}; };
    if (i == 0) return lg(bounds.signal_variance);
    if (i <= dims) return lg(bounds.lengthscale);
    if (i == dims + 1) return lg(bounds.noise_variance);
    return lg(bounds.epsilon);
  }

  KernelParams decode(const std::vector<double>& theta) const {
    KernelParams p;
    p.signal_variance = std::exp(theta[0]);
    p.lengthscales.resize(dims);
    for (std::size_t i = 0; i < dims; ++i) p.lengthscales[i] = std::exp(theta[1 + i]);
    p.noise_variance = std::exp(theta[dims + 1]);
    p.epsilon = bounds.fit_epsilon ? std::exp(theta[dims + 2]) : bounds.fixed_epsilon;
    return p;
  }
};

inline double log_likelihood_for(const std::vector<Input>& xs, const Eigen::VectorXd& y, const KernelParams& p) {
  Factor f;
  try {
    f = factorize(gram(xs, p), p);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
  Eigen::VectorXd a = f.lower.triangularView<Eigen::Lower>().solve(y);
  double v = -0.5 * a.squaredNorm() - f.lower.diagonal().array().log().sum() -
             0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
  return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Maximizes the log marginal likelihood over the kernel parameters with
/// random-restart coordinate-wise golden-section search in log space. Moves
/// are only accepted when they improve the likelihood.
inline Model fit(std::vector<Input> inputs, const std::vector<double>& targets, const KernelBounds& bounds, Rng& rng,
                 const FitOptions& options = {}) {
  if (inputs.empty()) throw std::invalid_argument("GP fit needs at least one point");
  if (inputs.size() != targets.size()) throw std::invalid_argument("GP inputs/targets size mismatch");
  const std::size_t dims = inputs.front().x.size();
  for (const auto& in : inputs)
    if (in.x.size() != dims) throw std::invalid_argument("GP inputs have inconsistent dimension");

  Model m;
  m.inputs_ = std::move(inputs);
  m.standardize(targets);

  detail::ParamCodec codec{dims, bounds};
  if (m.degenerate_) {
    // Constant targets carry no information about the kernel.
    std::vector<double> theta(codec.count());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      auto r = codec.range(i);
      theta[i] = 0.5 * (r.lo + r.hi);
    }
    m.params_ = codec.decode(theta);
    m.refactor();
    m.diagnostics_.final_log_likelihood = m.log_likelihood_;
    return m;
  }

  Eigen::Map<const Eigen::VectorXd> y(m.y_.data(), static_cast<Eigen::Index>(m.y_.size()));
  auto objective = [&](const std::vector<double>& theta) {
    ++m.diagnostics_.evaluations;
    return detail::log_likelihood_for(m.inputs_, y, codec.decode(theta));
  };

  constexpr double kInvPhi = 0.6180339887498949;
  const std::size_t n_params = codec.count();
  std::vector<double> best_theta;
  double best_value = -std::numeric_limits<double>::infinity();

  for (int start = 0; start < options.restarts; ++start) {
    std::vector<double> theta(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
      auto r = codec.range(i);
      theta[i] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
    double value = objective(theta);
    m.diagnostics_.start_log_likelihoods.push_back(value);

    int budget = options.iterations;
    std::size_t coord = 0;
    while (budget > 0) {
      auto r = codec.range(coord);
      double a = r.lo, b = r.hi;
      double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
      auto at = [&](double v) {
        auto t = theta;
        t[coord] = v;
        return objective(t);
      };
      double fc = at(c), fd = at(d);
      budget -= 2;
      double cand = fc >= fd ? c : d, cand_value = std::max(fc, fd);
      for (int e = 2; e < options.line_search_evals && budget > 0; ++e, --budget) {
        if (fc >= fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - kInvPhi * (b - a);
          fc = at(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + kInvPhi * (b - a);
          fd = at(d);
        }
        if (fc > cand_value) cand = c, cand_value = fc;
        if (fd > cand_value) cand = d, cand_value = fd;
      }
      if (cand_value > value) {
        theta[coord] = cand;
        value = cand_value;
      }
      coord = (coord + 1) % n_params;
    }
    if (value > best_value || best_theta.empty()) {
      best_value = value;
      best_theta = theta;
    }
  }

  m.params_ = codec.decode(best_theta);
  m.refactor();
  m.diagnostics_.final_log_likelihood = m.log_likelihood_;
  return m;
}

/// Scores n_candidates uniform samples by mean + sqrt(beta) * std at time
/// `now` and returns the best n_suggestions distinct ones. Ties keep
/// candidate order.
inline std::vector<HPVector> suggest_ucb(const Model& model, const HyperparameterSpace& space, double now,
                                         std::size_t n_suggestions, std::size_t n_candidates, double beta, Rng& rng) {
  if (n_suggestions == 0) return {};
  if (n_candidates < n_suggestions) throw std::invalid_argument("suggest_ucb: n_candidates < n_suggestions");
  std::vector<HPVector> candidates;
  std::vector<Input> queries;
  candidates.reserve(n_candidates);
  queries.reserve(n_candidates);
  for (std::size_t i = 0; i < n_candidates; ++i) {
    candidates.push_back(space.sample_uniform(rng));
    queries.push_back({space.normalize(candidates.back()), now});
  }
  auto preds = model.predict_batch(queries);
  std::vector<double> score(n_candidates);
  const double w = std::sqrt(std::max(0.0, beta));
  for (std::size_t i = 0; i < n_candidates; ++i) score[i] = preds[i].mean + w * std::sqrt(preds[i].variance);
  std::vector<std::size_t> order(n_candidates);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<HPVector> out;
  std::vector<std::size_t> skipped;
  for (std::size_t idx : order) {
    if (out.size() == n_suggestions) break;
    const auto& c = candidates[idx];
    if (std::find(out.begin(), out.end(), c) != out.end()) {
      skipped.push_back(idx);
      continue;
    }
    out.push_back(c);
  }
  // Tiny lattices may not hold enough distinct points.
  for (std::size_t i = 0; out.size() < n_suggestions && i < skipped.size(); ++i) out.push_back(candidates[skipped[i]]);
  return out;
}

/// Population z-scores; a zero-spread list maps to all zeros.
inline std::vector<double> zscore(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  double sd = std::sqrt(ss / n);
  std::vector<double> z(v.size(), 0.0);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return z;
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = (v[i] - mean) / sd;
  return z;
}

/// Lower lengthscale bound of the trajectory smoother, in outer steps. Shorter
/// lengthscales let the maximum-likelihood fit chase step-to-step noise.
inline constexpr double smoother_min_lengthscale_steps = 5.0;

inline KernelBounds smoother_bounds(std::size_t n) {
  KernelBounds b;
  b.signal_variance = {0.05, 20.0};
  b.lengthscale = {smoother_min_lengthscale_steps / static_cast<double>(std::max<std::size_t>(n, 2) - 1), 10.0};
  if (b.lengthscale.lo >= b.lengthscale.hi) b.lengthscale.lo = 0.5 * b.lengthscale.hi;
  b.noise_variance = {1e-4, 1.0};
  b.fit_epsilon = false;
  b.fixed_epsilon = 0.0;
  return b;
}

inline std::vector<Input> trajectory_inputs(std::size_t n) {
  std::vector<Input> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = {{static_cast<double>(i) / static_cast<double>(n - 1)}, 0.0};
  return xs;
}

/// The GP behind smooth_trajectory, fitted on z-scores over indices rescaled
/// to [0,1]. Uses a fixed stream so smoothing is a pure function of the data.
inline Model fit_smoother(const std::vector<double>& z) {
  Rng rng(0x5eed5eedULL + z.size());
  return fit(trajectory_inputs(z.size()), z, smoother_bounds(z.size()), rng);
}

/// Z-scores the scores, fits a 1-D GP over the step index and returns the
/// posterior mean at every index, in z units.
inline std::vector<double> smooth_trajectory(const std::vector<double>& scores) {
  if (scores.size() < 2) throw std::invalid_argument("smooth_trajectory needs at least two scores");
  auto z = zscore(scores);
  if (std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; })) return z;
  const std::size_t n = scores.size();
  auto xs = trajectory_inputs(n);
  auto model = fit_smoother(z);
  auto preds = model.predict_batch(xs);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = preds[i].mean;
  return out;
}

}  // namespace ipbt::gp
