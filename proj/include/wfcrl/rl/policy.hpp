#pragma once

// Actor-critic network (input -> 64 -> 64, tanh) with a hand-written
// backward pass, Gaussian action sampling and the deterministic inference
// path.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfcrl/rng.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl::rl {

inline constexpr int kHiddenUnits = 64;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionScale = 2.0;

struct PolicyMetadata {
  Biome biome = Biome::City;
  Layout layout = Layout::Continuous;
  int width = 0;  // trained grid size; observations are padded to it
  int height = 0;
  std::uint64_t episodes = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const PolicyMetadata&, const PolicyMetadata&) = default;
};

struct TensorShape {
  int rows = 0;
  int cols = 0;
  [[nodiscard]] int size() const noexcept { return rows * cols; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Network weights in declaration order: trunk layer 1, trunk layer 2,
/// actor head (mean, log_std) and critic head. Matrices are row-major with
/// one row per output unit. The same struct doubles as a gradient buffer.
struct PolicyParams {
  static constexpr int kTensorCount = 8;

  int input_dim = 0;
  int hidden = kHiddenUnits;
  std::vector<double> w1, b1, w2, b2, wa, ba, wv, bv;
  PolicyMetadata meta;

  static PolicyParams zeros(int input_dim, int hidden = kHiddenUnits) {
    PolicyParams p;
    p.input_dim = input_dim;
    p.hidden = hidden;
    const auto shapes = p.shapes();
    auto ts = p.tensors();
    for (int i = 0; i < kTensorCount; ++i) ts[i]->assign(static_cast<std::size_t>(shapes[i].size()), 0.0);
    return p;
  }

  /// Scaled Gaussian initialization; the actor head starts near zero so the
  /// untrained policy is close to r_RL = 0 with unit spread.
  static PolicyParams initial(int input_dim, std::uint64_t seed, double initial_log_std = 0.0,
                              int hidden = kHiddenUnits) {
    PolicyParams p = zeros(input_dim, hidden);
    Rng rng(seed);
    auto fill = [&](std::vector<double>& w, int fan_in, double gain) {
      const double scale = gain / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : w) v = rng.normal() * scale;
    };
    fill(p.w1, input_dim, 1.0);
    fill(p.w2, hidden, 1.0);
    fill(p.wa, hidden, 0.01);
    fill(p.wv, hidden, 1.0);
    p.ba[1] = initial_log_std;
    return p;
  }

  [[nodiscard]] std::array<TensorShape, kTensorCount> shapes() const {
    return {TensorShape{hidden, input_dim}, {hidden, 1}, {hidden, hidden}, {hidden, 1},
            {2, hidden},                    {2, 1},      {1, hidden},      {1, 1}};
  }
  [[nodiscard]] std::array<std::vector<double>*, kTensorCount> tensors() {
    return {&w1, &b1, &w2, &b2, &wa, &ba, &wv, &bv};
  }
  [[nodiscard]] std::array<const std::vector<double>*, kTensorCount> tensors() const {
    return {&w1, &b1, &w2, &b2, &wa, &ba, &wv, &bv};
  }
  static constexpr std::array<const char*, kTensorCount> tensor_names() {
    return {"trunk1.weight", "trunk1.bias", "trunk2.weight", "trunk2.bias",
            "actor.weight",  "actor.bias",  "critic.weight", "critic.bias"};
  }

  [[nodiscard]] bool finite() const {
    for (const auto* t : tensors())
      for (double v : *t)
        if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct PolicyOutput {
  double mean = 0.0;
  double log_std = 0.0;  // clamped
  double std = 1.0;
  double value = 0.0;
};

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<double> h1, h2;
  double log_std_raw = 0.0;
  PolicyOutput out;
};

inline void forward(const PolicyParams& p, std::span<const double> x, ForwardCache& cache) {
  if (static_cast<int>(x.size()) != p.input_dim)
    throw std::invalid_argument("policy_forward: observation has " + std::to_string(x.size()) +
                                " values, network expects " + std::to_string(p.input_dim));
  const auto H = static_cast<std::size_t>(p.hidden);
  const auto D = static_cast<std::size_t>(p.input_dim);
  cache.h1.resize(H);
  cache.h2.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    double s = p.b1[j];
    const double* row = &p.w1[j * D];
    for (std::size_t i = 0; i < D; ++i) s += row[i] * x[i];
    cache.h1[j] = std::tanh(s);
  }
  for (std::size_t j = 0; j < H; ++j) {
    double s = p.b2[j];
    const double* row = &p.w2[j * H];
    for (std::size_t i = 0; i < H; ++i) s += row[i] * cache.h1[i];
    cache.h2[j] = std::tanh(s);
  }
  double mean = p.ba[0], log_std = p.ba[1], value = p.bv[0];
  for (std::size_t i = 0; i < H; ++i) {
    mean += p.wa[i] * cache.h2[i];
    log_std += p.wa[H + i] * cache.h2[i];
    value += p.wv[i] * cache.h2[i];
  }
  cache.log_std_raw = log_std;
  const double clamped = std::clamp(log_std, kLogStdMin, kLogStdMax);
  cache.out = {mean, clamped, std::exp(clamped), value};
}

inline PolicyOutput policy_forward(const PolicyParams& p, std::span<const double> x) {
  ForwardCache cache;
  forward(p, x, cache);
  return cache.out;
}

/// Accumulates parameter gradients into `grads` given upstream gradients of
/// the loss with respect to mean, clamped log_std and value.
inline void backward(const PolicyParams& p, std::span<const double> x, const ForwardCache& cache, double d_mean,
                     double d_log_std, double d_value, PolicyParams& grads) {
  const auto H = static_cast<std::size_t>(p.hidden);
  const auto D = static_cast<std::size_t>(p.input_dim);
  // Clamp passes gradient only strictly inside its bounds.
  const double d_log_std_raw =
      (cache.log_std_raw > kLogStdMin && cache.log_std_raw < kLogStdMax) ? d_log_std : 0.0;

  grads.ba[0] += d_mean;
  grads.ba[1] += d_log_std_raw;
  grads.bv[0] += d_value;
  std::vector<double> d_h2(H), d_pre2(H), d_pre1(H, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    grads.wa[i] += d_mean * cache.h2[i];
    grads.wa[H + i] += d_log_std_raw * cache.h2[i];
    grads.wv[i] += d_value * cache.h2[i];
    d_h2[i] = d_mean * p.wa[i] + d_log_std_raw * p.wa[H + i] + d_value * p.wv[i];
    d_pre2[i] = d_h2[i] * (1.0 - cache.h2[i] * cache.h2[i]);
  }
  for (std::size_t j = 0; j < H; ++j) {
    grads.b2[j] += d_pre2[j];
    double* grow = &grads.w2[j * H];
    const double* row = &p.w2[j * H];
    for (std::size_t i = 0; i < H; ++i) {
      grow[i] += d_pre2[j] * cache.h1[i];
      d_pre1[i] += d_pre2[j] * row[i];
    }
  }
  for (std::size_t i = 0; i < H; ++i) d_pre1[i] *= (1.0 - cache.h1[i] * cache.h1[i]);
  for (std::size_t j = 0; j < H; ++j) {
    grads.b1[j] += d_pre1[j];
    double* grow = &grads.w1[j * D];
    for (std::size_t i = 0; i < D; ++i) grow[i] += d_pre1[j] * x[i];
  }
}

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

inline double gaussian_log_prob(double x, double mean, double log_std) {
  const double z = (x - mean) / std::exp(log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

/// log |d(2 tanh u)/du|, computed without cancellation for large |u|.
inline double squash_log_jacobian(double raw) {
  const double a = std::abs(raw);
  return std::log(kActionScale) + 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

struct Action {
  double r_rl = 0.0;      // squashed into (-2, 2)
  double raw = 0.0;       // pre-squash Gaussian draw
  double log_prob = 0.0;  // density of r_rl, squash correction included
};

inline Action action_from_raw(double raw, double mean, double std) {
  return {kActionScale * std::tanh(raw), raw, gaussian_log_prob(raw, mean, std::log(std)) - squash_log_jacobian(raw)};
}

inline Action sample_action(double mean, double std, Rng& rng) {
  if (!(std > 0.0)) throw std::invalid_argument("sample_action: std must be positive");
  return action_from_raw(mean + std * rng.normal(), mean, std);
}

inline double gaussian_entropy(double log_std) { return 0.5 + kHalfLog2Pi + log_std; }

/// Deterministic action used after training: the squashed mean.
inline double infer(const PolicyParams& p, std::span<const double> obs) {
  return kActionScale * std::tanh(policy_forward(p, obs).mean);
}

}  // namespace wfcrl::rl
