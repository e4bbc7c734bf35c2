#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipbt/hpspace.hpp"
#include "ipbt/random.hpp"
#include "ipbt/trainable.hpp"

namespace ipbt {

// ---------------------------------------------------------------------------
// quadratic_bowl: gradient descent on L(w) = 1/2 w^T A(g) w with diagonal A
// whose condition number grows with the global step.

struct QuadraticBowlParams {
  std::size_t dim = 4;
  double min_curvature = 1.0;
  double condition = 10.0;  ///< condition number of A at global step 0
  double drift = 1.0;       ///< relative growth of the condition number per horizon
  double horizon = 200.0;
  double init_scale = 1.0;
  double clamp = 1e8;

  void validate() const {
    if (dim == 0) throw std::invalid_argument("quadratic_bowl.dim must be >= 1");
    if (!(min_curvature > 0.0)) throw std::invalid_argument("quadratic_bowl.min_curvature must be > 0");
    if (!(condition >= 1.0)) throw std::invalid_argument("quadratic_bowl.condition must be >= 1");
    if (!(drift >= 0.0)) throw std::invalid_argument("quadratic_bowl.drift must be >= 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("quadratic_bowl.horizon must be > 0");
    if (!(init_scale >= 0.0)) throw std::invalid_argument("quadratic_bowl.init_scale must be >= 0");
    if (!(clamp > 0.0 && std::isfinite(clamp))) throw std::invalid_argument("quadratic_bowl.clamp must be finite and > 0");
  }
};

class QuadraticBowl final : public Trainable {
 public:
  QuadraticBowl(QuadraticBowlParams p, const HyperparameterSpace& space) : p_(p) {
    p_.validate();
    lr_index_ = space.require("learning_rate");
  }

  std::string kind() const override { return "quadratic_bowl"; }
  std::size_t weight_dim() const override { return p_.dim; }
  const QuadraticBowlParams& params() const { return p_; }

  /// Eigenvalue j of A at global step g.
  double curvature(std::size_t j, double g) const {
    double cond = p_.condition * (1.0 + p_.drift * g / p_.horizon);
    double frac = p_.dim == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(p_.dim - 1);
    return p_.min_curvature * std::pow(cond, frac);
  }

  WeightState fresh_init(Rng& rng) const override {
    WeightState w;
    w.values.resize(p_.dim);
    for (auto& v : w.values) v = p_.init_scale * standard_normal(rng);
    return w;
  }

  WeightState train(const WeightState& w, const HPVector& h, std::size_t inner_steps, std::size_t global_step,
                    Rng&) const override {
    WeightState out = w;
    if (out.crashed) return out;
    const double lr = h[lr_index_];
    for (std::size_t k = 0; k < inner_steps; ++k) {
      const double g = static_cast<double>(global_step + k);
      for (std::size_t j = 0; j < p_.dim; ++j) out.values[j] -= lr * curvature(j, g) * out.values[j];
      if (diverged(out.values)) {
        for (auto& v : out.values) v = std::isnan(v) ? p_.clamp : std::clamp(v, -p_.clamp, p_.clamp);
        out.crashed = true;
        break;
      }
    }
    return out;
  }

  /// Negated loss under the step-0 curvature, so scores stay comparable over time.
  double evaluate(const WeightState& w) const override {
    if (w.crashed || diverged(w.values)) return sentinel_score();
    double loss = 0.0;
    for (std::size_t j = 0; j < p_.dim; ++j) loss += 0.5 * curvature(j, 0.0) * w.values[j] * w.values[j];
    return -loss;
  }

  double sentinel_score() const override {
    double worst = 0.0;
    for (std::size_t j = 0; j < p_.dim; ++j) worst += 0.5 * curvature(j, 0.0) * p_.clamp * p_.clamp;
    return -2.0 * worst - 1.0;
  }

 private:
  bool diverged(const std::vector<double>& v) const {
    for (double x : v)
      if (!std::isfinite(x) || std::abs(x) >= p_.clamp) return true;
    return false;
  }

  QuadraticBowlParams p_;
  std::size_t lr_index_ = 0;
};

// ---------------------------------------------------------------------------
// learning_curve: scalar skill with exponential saturation. A higher learning
// rate moves faster but saturates at a lower ceiling, and the rate decays with
// the global step, so greedy settings win early and patient ones win late.

struct LearningCurveParams {
  double ceiling = 1.0;
  double ceiling_penalty = 0.5;  ///< ceiling(lr) = ceiling / (1 + penalty * lr)
  double max_rate = 0.1;
  double rate_half_lr = 0.1;     ///< lr at which the rate reaches half of max_rate
  double drift = 4.2;            ///< rate(lr, g) is divided by 1 + drift * g / horizon
  double horizon = 200.0;
  double noise_std = 0.002;  ///< per-step noise at the maximal rate
  double init_skill = 0.0;

  void validate() const {
    if (!std::isfinite(ceiling)) throw std::invalid_argument("learning_curve.ceiling must be finite");
    if (!(ceiling_penalty >= 0.0)) throw std::invalid_argument("learning_curve.ceiling_penalty must be >= 0");
    if (!(max_rate >= 0.0 && max_rate <= 1.0)) throw std::invalid_argument("learning_curve.max_rate must lie in [0,1]");
    if (!(rate_half_lr > 0.0)) throw std::invalid_argument("learning_curve.rate_half_lr must be > 0");
    if (!(drift >= 0.0)) throw std::invalid_argument("learning_curve.drift must be >= 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("learning_curve.horizon must be > 0");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("learning_curve.noise_std must be >= 0");
    if (!std::isfinite(init_skill)) throw std::invalid_argument("learning_curve.init_skill must be finite");
  }
};

class LearningCurve final : public Trainable {
 public:
  LearningCurve(LearningCurveParams p, const HyperparameterSpace& space) : p_(p) {
    p_.validate();
    lr_index_ = space.require("learning_rate");
  }

  std::string kind() const override { return "learning_curve"; }
  std::size_t weight_dim() const override { return 1; }
  const LearningCurveParams& params() const { return p_; }

  double rate(double lr, double g) const {
    if (lr <= 0.0) return 0.0;
    return p_.max_rate * lr / (lr + p_.rate_half_lr) / (1.0 + p_.drift * g / p_.horizon);
  }
  double ceiling(double lr) const { return p_.ceiling / (1.0 + p_.ceiling_penalty * std::max(lr, 0.0)); }

  WeightState fresh_init(Rng&) const override { return WeightState{{p_.init_skill}, false}; }

  WeightState train(const WeightState& w, const HPVector& h, std::size_t inner_steps, std::size_t global_step,
                    Rng& rng) const override {
    WeightState out = w;
    const double lr = h[lr_index_];
    const double c = ceiling(lr);
    double s = out.values.at(0);
    for (std::size_t k = 0; k < inner_steps; ++k) {
      const double r = rate(lr, static_cast<double>(global_step + k));
      s += r * (c - s);
      // Noise shrinks with the step so selection cannot ratchet it past the ceiling.
      if (p_.noise_std > 0.0 && p_.max_rate > 0.0) s += p_.noise_std * (r / p_.max_rate) * standard_normal(rng);
    }
    out.values[0] = s;
    return out;
  }

  double evaluate(const WeightState& w) const override {
    if (w.crashed || !std::isfinite(w.values.at(0))) return sentinel_score();
    return w.values[0];
  }

  double sentinel_score() const override { return -1e9; }

 private:
  LearningCurveParams p_;
  std::size_t lr_index_ = 0;
};

// ---------------------------------------------------------------------------
// tiny_mlp: one tanh hidden layer, softmax output, SGD with momentum and
// weight decay. WeightState = [W1 b1 W2 b2 | momentum buffer of same size].

enum class MlpDataset { blobs, linear };

struct TinyMlpParams {
  std::size_t input_dim = 2;
  std::size_t hidden = 16;
  std::size_t classes = 3;
  std::size_t n_train = 512;
  std::size_t n_val = 256;
  std::size_t n_test = 256;
  std::size_t batch_size = 32;
  MlpDataset dataset = MlpDataset::blobs;
  double blob_std = 1.0;
  double bias_init_std = 0.01;
  std::uint64_t data_seed = 1234;

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("tiny_mlp.input_dim must be >= 1");
    if (hidden == 0) throw std::invalid_argument("tiny_mlp.hidden must be >= 1");
    if (classes < 2) throw std::invalid_argument("tiny_mlp.classes must be >= 2");
    if (dataset == MlpDataset::linear && classes != 2)
      throw std::invalid_argument("tiny_mlp linear dataset has exactly 2 classes");
    if (n_train == 0 || n_val == 0 || n_test == 0) throw std::invalid_argument("tiny_mlp splits must be non-empty");
    if (batch_size == 0) throw std::invalid_argument("tiny_mlp.batch_size must be >= 1");
    if (!(blob_std > 0.0)) throw std::invalid_argument("tiny_mlp.blob_std must be > 0");
    if (!(bias_init_std >= 0.0)) throw std::invalid_argument("tiny_mlp.bias_init_std must be >= 0");
  }
};

class TinyMlp final : public Trainable {
 public:
  struct Split {
    std::vector<double> x;  ///< row-major, n x input_dim
    std::vector<int> y;
    std::size_t size() const { return y.size(); }
  };

  TinyMlp(TinyMlpParams p, const HyperparameterSpace& space) : p_(p) {
    p_.validate();
    lr_index_ = space.require("learning_rate");
    mom_index_ = space.require("momentum");
    wd_index_ = space.require("weight_decay");
    make_data();
  }

  std::string kind() const override { return "tiny_mlp"; }
  const TinyMlpParams& params() const { return p_; }
  const Split& train_split() const { return train_; }

  std::size_t param_count() const {
    const auto D = p_.input_dim, H = p_.hidden, K = p_.classes;
    return H * D + H + K * H + K;
  }
  std::size_t weight_dim() const override { return 2 * param_count(); }

  /// Variance of each coordinate under fresh_init.
  std::vector<double> init_variances() const {
    const auto D = p_.input_dim, H = p_.hidden, K = p_.classes;
    std::vector<double> v;
    v.reserve(weight_dim());
    v.insert(v.end(), H * D, 2.0 / static_cast<double>(D + H));
    v.insert(v.end(), H, p_.bias_init_std * p_.bias_init_std);
    v.insert(v.end(), K * H, 2.0 / static_cast<double>(H + K));
    v.insert(v.end(), K, p_.bias_init_std * p_.bias_init_std);
    v.insert(v.end(), param_count(), 0.0);
    return v;
  }

  WeightState fresh_init(Rng& rng) const override {
    auto var = init_variances();
    WeightState w;
    w.values.resize(var.size());
    for (std::size_t i = 0; i < var.size(); ++i)
      w.values[i] = var[i] > 0.0 ? std::sqrt(var[i]) * standard_normal(rng) : 0.0;
    return w;
  }

  /// Mean cross-entropy over the given training rows plus 1/2 wd ||W||^2
  /// (biases excluded). Fills grad (size param_count) when non-null.
  double loss_and_gradient(const double* theta, const std::vector<std::size_t>& rows, double weight_decay,
                           std::vector<double>* grad) const {
    const auto D = p_.input_dim, H = p_.hidden, K = p_.classes;
    const double* W1 = theta;
    const double* b1 = W1 + H * D;
    const double* W2 = b1 + H;
    const double* b2 = W2 + K * H;
    if (grad) grad->assign(param_count(), 0.0);
    double* gW1 = grad ? grad->data() : nullptr;
    double* gb1 = grad ? gW1 + H * D : nullptr;
    double* gW2 = grad ? gb1 + H : nullptr;
    double* gb2 = grad ? gW2 + K * H : nullptr;

    std::vector<double> hid(H), logits(K), dlog(K), dhid(H);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (auto r : rows) {
      const double* x = &train_.x[r * D];
      forward(W1, b1, W2, b2, x, hid, logits);
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[k] - mx);
      const int y = train_.y[r];
      loss += (std::log(z) + mx - logits[y]) * inv_n;
      if (!grad) continue;
      for (std::size_t k = 0; k < K; ++k) {
        dlog[k] = (std::exp(logits[k] - mx) / z - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_n;
        gb2[k] += dlog[k];
        for (std::size_t j = 0; j < H; ++j) gW2[k * H + j] += dlog[k] * hid[j];
      }
      for (std::size_t j = 0; j < H; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += W2[k * H + j] * dlog[k];
        dhid[j] = s * (1.0 - hid[j] * hid[j]);
        gb1[j] += dhid[j];
        for (std::size_t i = 0; i < D; ++i) gW1[j * D + i] += dhid[j] * x[i];
      }
    }
    double reg = 0.0;
    for (std::size_t i = 0; i < H * D; ++i) {
      reg += W1[i] * W1[i];
      if (grad) gW1[i] += weight_decay * W1[i];
    }
    for (std::size_t i = 0; i < K * H; ++i) {
      reg += W2[i] * W2[i];
      if (grad) gW2[i] += weight_decay * W2[i];
    }
    return loss + 0.5 * weight_decay * reg;
  }

  WeightState train(const WeightState& w, const HPVector& h, std::size_t inner_steps, std::size_t,
                    Rng& rng) const override {
    WeightState out = w;
    if (out.crashed) return out;
    const double lr = h[lr_index_], mu = h[mom_index_], wd = h[wd_index_];
    const std::size_t P = param_count();
    double* theta = out.values.data();
    double* vel = theta + P;
    std::vector<std::size_t> rows(p_.batch_size);
    std::vector<double> grad;
    for (std::size_t step = 0; step < inner_steps; ++step) {
      for (auto& r : rows) r = uniform_index(rng, train_.size());
      double loss = loss_and_gradient(theta, rows, wd, &grad);
      if (!std::isfinite(loss)) return crashed_state();
      for (std::size_t i = 0; i < P; ++i) {
        vel[i] = mu * vel[i] + grad[i];
        theta[i] -= lr * vel[i];
      }
      if (!all_finite(out.values)) return crashed_state();
    }
    return out;
  }

  /// Validation accuracy.
  double evaluate(const WeightState& w) const override { return accuracy(w, val_); }
  double test_score(const WeightState& w) const override { return accuracy(w, test_); }
  double sentinel_score() const override { return -1.0; }

  double accuracy(const WeightState& w, const Split& s) const {
    if (w.crashed || w.values.size() != weight_dim() || !all_finite(w.values)) return sentinel_score();
    const auto D = p_.input_dim, H = p_.hidden, K = p_.classes;
    const double* W1 = w.values.data();
    const double* b1 = W1 + H * D;
    const double* W2 = b1 + H;
    const double* b2 = W2 + K * H;
    std::vector<double> hid(H), logits(K);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < s.size(); ++r) {
      forward(W1, b1, W2, b2, &s.x[r * D], hid, logits);
      auto pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
      correct += pred == s.y[r];
    }
    return static_cast<double>(correct) / static_cast<double>(s.size());
  }

 private:
  void forward(const double* W1, const double* b1, const double* W2, const double* b2, const double* x,
               std::vector<double>& hid, std::vector<double>& logits) const {
    const auto D = p_.input_dim, H = p_.hidden, K = p_.classes;
    for (std::size_t j = 0; j < H; ++j) {
      double a = b1[j];
      for (std::size_t i = 0; i < D; ++i) a += W1[j * D + i] * x[i];
      hid[j] = std::tanh(a);
    }
    for (std::size_t k = 0; k < K; ++k) {
      double a = b2[k];
      for (std::size_t j = 0; j < H; ++j) a += W2[k * H + j] * hid[j];
      logits[k] = a;
    }
  }

  WeightState crashed_state() const {
    WeightState w;
    w.values.assign(weight_dim(), 0.0);
    w.crashed = true;
    return w;
  }

  void make_data() {
    Rng rng(p_.data_seed);
    const auto D = p_.input_dim, K = p_.classes;
    std::vector<double> centers(K * D), direction(D);
    for (auto& c : centers) c = 2.0 * standard_normal(rng);
    double norm = 0.0;
    for (auto& d : direction) {
      d = standard_normal(rng);
      norm += d * d;
    }
    for (auto& d : direction) d /= std::sqrt(norm);

    auto fill = [&](Split& s, std::size_t n) {
      s.x.reserve(n * D);
      while (s.y.size() < n) {
        if (p_.dataset == MlpDataset::blobs) {
          auto k = uniform_index(rng, K);
          for (std::size_t i = 0; i < D; ++i) s.x.push_back(centers[k * D + i] + p_.blob_std * standard_normal(rng));
          s.y.push_back(static_cast<int>(k));
        } else {
          std::vector<double> x(D);
          double proj = 0.0;
          for (std::size_t i = 0; i < D; ++i) {
            x[i] = 2.0 * uniform01(rng) - 1.0;
            proj += x[i] * direction[i];
          }
          if (std::abs(proj) < 0.05) continue;  // margin keeps the classes separable
          s.x.insert(s.x.end(), x.begin(), x.end());
          s.y.push_back(proj > 0.0 ? 1 : 0);
        }
      }
    };
    fill(train_, p_.n_train);
    fill(val_, p_.n_val);
    fill(test_, p_.n_test);
  }

  TinyMlpParams p_;
  std::size_t lr_index_ = 0, mom_index_ = 0, wd_index_ = 0;
  Split train_, val_, test_;
};

}  // namespace ipbt
