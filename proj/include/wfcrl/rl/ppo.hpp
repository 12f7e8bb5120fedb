#pragma once

// Clipped-surrogate PPO: advantage estimation, the loss with its analytic
// gradient, and minibatch Adam updates.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wfcrl/rl/policy.hpp"
#include "wfcrl/rl/reward.hpp"
#include "wfcrl/rng.hpp"

namespace wfcrl::rl {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 3.0e-4;
  int buffer_size = 2048;
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  int episodes = 2000;
  double gae_lambda = 0.95;
  int epochs_per_update = 4;
  double k1 = kDefaultK1;
  double k2 = kDefaultK2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double initial_log_std = 0.7;
  bool normalized_efficiency = false;
  int workers = 1;

  /// Empty when valid, otherwise the first offending field.
  [[nodiscard]] std::optional<std::string> invalid_reason() const {
    if (batch_size <= 0) return "batch_size must be positive";
    if (!(learning_rate > 0.0)) return "learning_rate must be positive";
    if (buffer_size <= 0) return "buffer_size must be positive";
    if (!(gamma > 0.0 && gamma <= 1.0)) return "gamma must lie in (0, 1]";
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) return "clip_epsilon must lie in (0, 1)";
    if (episodes < 0) return "episodes must be non-negative";
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) return "gae_lambda must lie in [0, 1]";
    if (epochs_per_update <= 0) return "epochs_per_update must be positive";
    if (!(k1 > 0.0) || !(k2 > 0.0)) return "k1 and k2 must be positive";
    if (workers <= 0) return "workers must be positive";
    return std::nullopt;
  }
};

struct Sample {
  std::vector<double> obs;
  double raw_action = 0.0;
  double log_prob = 0.0;  // behavior policy log-density of the squashed action
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct Rollout {
  std::vector<Sample> steps;
  std::vector<double> rewards;  // zero except the terminal step
  RewardBreakdown reward;
  std::uint64_t seed = 0;
  bool advantages_ready = false;
};

/// Generalized advantage estimation over one episode (terminal value 0);
/// returns = advantages + values.
inline void compute_advantages(Rollout& r, double gamma, double lambda) {
  const auto n = r.steps.size();
  double next_adv = 0.0, next_value = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    auto& s = r.steps[k];
    const double delta = r.rewards[k] + gamma * next_value - s.value;
    s.advantage = delta + gamma * lambda * next_adv;
    s.ret = s.advantage + s.value;
    next_adv = s.advantage;
    next_value = s.value;
  }
  r.advantages_ready = true;
}

/// Zero mean, unit variance across the whole buffer.
inline void normalize_advantages(std::span<Sample> samples) {
  if (samples.empty()) return;
  double mean = 0.0;
  for (const auto& s : samples) mean += s.advantage;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
  var /= static_cast<double>(samples.size());
  const double sd = std::sqrt(var);
  for (auto& s : samples) s.advantage = sd > 1e-8 ? (s.advantage - mean) / sd : s.advantage - mean;
}

/// Per-sample clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A).
inline double clipped_objective(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

/// d/d ratio of clipped_objective: A on the unclipped branch, 0 where the
/// clip binds.
inline double clipped_objective_grad(double ratio, double advantage, double eps) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
  return unclipped <= clipped ? advantage : 0.0;
}

struct LossStats {
  double total = 0.0;
  double policy = 0.0;  // negated mean surrogate
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct LossCoefficients {
  double clip_epsilon = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

/// loss = -mean(surrogate) + value_coef * mean((V - ret)^2) - entropy_coef * mean(H)
/// When `grads` is given the analytic gradient is accumulated into it.
inline LossStats ppo_loss(const PolicyParams& p, std::span<const Sample* const> batch, const LossCoefficients& c,
                          PolicyParams* grads = nullptr) {
  LossStats st;
  const double inv = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  int clipped = 0;
  for (const Sample* s : batch) {
    forward(p, s->obs, cache);
    const auto& out = cache.out;
    const double logp = gaussian_log_prob(s->raw_action, out.mean, out.log_std) - squash_log_jacobian(s->raw_action);
    const double ratio = std::exp(logp - s->log_prob);
    const double surr = clipped_objective(ratio, s->advantage, c.clip_epsilon);
    const double verr = out.value - s->ret;
    const double ent = gaussian_entropy(out.log_std);
    st.policy -= surr * inv;
    st.value += verr * verr * inv;
    st.entropy += ent * inv;
    if (std::abs(ratio - 1.0) > c.clip_epsilon) ++clipped;
    if (grads) {
      const double d_ratio = -clipped_objective_grad(ratio, s->advantage, c.clip_epsilon) * inv;
      const double var = out.std * out.std;
      const double diff = s->raw_action - out.mean;
      const double d_mean = d_ratio * ratio * diff / var;
      const double d_log_std = d_ratio * ratio * (diff * diff / var - 1.0) - c.entropy_coef * inv;
      const double d_value = 2.0 * c.value_coef * verr * inv;
      backward(p, s->obs, cache, d_mean, d_log_std, d_value, *grads);
    }
  }
  st.total = st.policy + c.value_coef * st.value - c.entropy_coef * st.entropy;
  st.clip_fraction = static_cast<double>(clipped) * inv;
  return st;
}

class Adam {
 public:
  explicit Adam(const PolicyParams& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(PolicyParams::zeros(shape.input_dim, shape.hidden)),
        v_(PolicyParams::zeros(shape.input_dim, shape.hidden)),
        lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(PolicyParams& p, const PolicyParams& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto pt = p.tensors();
    auto gt = g.tensors();
    auto mt = m_.tensors();
    auto vt = v_.tensors();
    for (int k = 0; k < PolicyParams::kTensorCount; ++k)
      for (std::size_t i = 0; i < pt[k]->size(); ++i) {
        const double gi = (*gt[k])[i];
        double& m = (*mt[k])[i];
        double& v = (*vt[k])[i];
        m = beta1_ * m + (1.0 - beta1_) * gi;
        v = beta2_ * v + (1.0 - beta2_) * gi * gi;
        (*pt[k])[i] -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
      }
  }

 private:
  PolicyParams m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

inline double grad_norm(const PolicyParams& g) {
  double s = 0.0;
  for (const auto* t : g.tensors())
    for (double v : *t) s += v * v;
  return std::sqrt(s);
}

struct UpdateStats {
  double loss = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
  bool aborted = false;
  std::string diagnostics;
};

/// epochs_per_update passes over shuffled minibatches; each minibatch takes
/// one Adam step on the clipped loss with global-norm gradient clipping.
/// A non-finite loss or gradient aborts the update and leaves `p` as it was.
inline UpdateStats ppo_update(PolicyParams& p, Adam& opt, std::span<const Sample> buffer, const TrainConfig& cfg,
                              Rng& rng) {
  UpdateStats st;
  if (buffer.empty()) return st;
  const PolicyParams before = p;
  const Adam opt_before = opt;
  const LossCoefficients coef{cfg.clip_epsilon, cfg.value_coef, cfg.entropy_coef};
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Sample*> batch;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(&buffer[order[k]]);
      PolicyParams g = PolicyParams::zeros(p.input_dim, p.hidden);
      const auto loss = ppo_loss(p, batch, coef, &g);
      const double norm = grad_norm(g);
      if (!std::isfinite(loss.total) || !std::isfinite(norm)) {
        p = before;
        opt = opt_before;
        st.aborted = true;
        st.diagnostics = "non-finite loss in epoch " + std::to_string(epoch) + ", minibatch " +
                         std::to_string(st.minibatches) + ": loss=" + std::to_string(loss.total) +
                         " policy=" + std::to_string(loss.policy) + " value=" + std::to_string(loss.value) +
                         " grad_norm=" + std::to_string(norm);
        return st;
      }
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        const double scale = cfg.max_grad_norm / norm;
        for (auto* t : g.tensors())
          for (double& v : *t) v *= scale;
      }
      opt.step(p, g);
      st.loss += loss.total;
      st.clip_fraction += loss.clip_fraction;
      ++st.minibatches;
    }
  }
  st.loss /= st.minibatches;
  st.clip_fraction /= st.minibatches;
  return st;
}

}  // namespace wfcrl::rl
