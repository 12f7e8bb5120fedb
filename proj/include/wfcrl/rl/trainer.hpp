#pragma once

// Episodic PPO training: each episode is one full map generation in which
// the stochastic policy supplies r_RL at every collapse decision and the
// finished map is scored once at the end.

#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wfcrl/engine.hpp"
#include "wfcrl/rl/artifact.hpp"
#include "wfcrl/rl/observation.hpp"
#include "wfcrl/rl/policy.hpp"
#include "wfcrl/rl/ppo.hpp"
#include "wfcrl/rl/reward.hpp"

namespace wfcrl::rl {

struct TrainLogLine {
  int update_idx = 0;
  double mean_R = 0.0;
  double loss = 0.0;
  double clip_fraction = 0.0;
  bool aborted = false;

  [[nodiscard]] std::string to_json() const {
    nlohmann::json j{{"update_idx", update_idx}, {"mean_R", mean_R}, {"loss", loss}, {"clip_fraction", clip_fraction}};
    if (aborted) j["aborted"] = true;
    return j.dump();
  }
};

struct PolicyArtifact {
  PolicyParams params;
  std::vector<CurveRow> curve;
  std::vector<TrainLogLine> log;
  std::vector<std::string> discarded;  // episodes dropped after an engine failure
};

/// Generation with the policy acting deterministically (inference mode).
inline MapResult generate(const BiomeConfig& config, int width, int height, std::uint64_t seed,
                          const PolicyParams* policy, GenerateOptions options = {}) {
  if (policy) {
    if (width > policy->meta.width || height > policy->meta.height ||
        policy->input_dim != observation_size(policy->meta.width, policy->meta.height))
      throw std::invalid_argument("policy was trained for " + std::to_string(policy->meta.width) + "x" +
                                  std::to_string(policy->meta.height) + " grids and cannot drive " +
                                  std::to_string(width) + "x" + std::to_string(height));
    options.adjuster = [policy, &config, buf = std::vector<double>{}](const GridState& g, int) mutable {
      encode_observation(g, config, policy->meta.width, policy->meta.height).flatten_into(buf);
      return infer(*policy, buf);
    };
  }
  return generate(config, width, height, seed, options);
}

inline Rollout run_episode(const PolicyParams& params, const BiomeConfig& config, int width, int height,
                           std::uint64_t episode_seed, const TrainConfig& tc) {
  Rollout ro;
  ro.seed = episode_seed;
  Rng action_rng(derive_seed(episode_seed, 1));
  GenerateOptions opt;
  ForwardCache cache;
  opt.adjuster = [&](const GridState& g, int) {
    auto obs = encode_observation(g, config, params.meta.width, params.meta.height).flatten();
    forward(params, obs, cache);
    const auto a = sample_action(cache.out.mean, cache.out.std, action_rng);
    ro.steps.push_back({std::move(obs), a.raw, a.log_prob, cache.out.value, 0.0, 0.0});
    return a.r_rl;
  };
  const auto map = generate(config, width, height, episode_seed, opt);
  ro.reward = evaluate_reward(map, config, tc.k1, tc.k2, tc.normalized_efficiency);
  ro.rewards.assign(ro.steps.size(), 0.0);
  if (!ro.rewards.empty()) ro.rewards.back() = ro.reward.total;
  return ro;
}

inline double window_mean(const std::vector<CurveRow>& curve, std::size_t first, std::size_t count) {
  if (first >= curve.size() || count == 0) return 0.0;
  const std::size_t last = std::min(curve.size(), first + count);
  double s = 0.0;
  for (std::size_t i = first; i < last; ++i) s += curve[i].reward.total;
  return s / static_cast<double>(last - first);
}

/// Trains a policy for one biome and grid size. Reproducible from `seed`
/// for a fixed worker count: with several workers, episodes run in chunks
/// against the parameters current at the start of the chunk and are merged
/// by episode index.
inline PolicyArtifact train(const BiomeConfig& config, int width, int height, const TrainConfig& tc,
                            std::uint64_t seed, const std::function<void(const std::string&)>& log_sink = {}) {
  if (auto why = tc.invalid_reason()) throw std::invalid_argument("invalid training configuration: " + *why);
  init_grid(config, width, height, 0);  // validates dimensions

  PolicyArtifact art;
  art.params = PolicyParams::initial(observation_size(width, height), derive_seed(seed, 0xA11CE), tc.initial_log_std);
  art.params.meta = {config.biome, config.layout, width, height, static_cast<std::uint64_t>(tc.episodes), seed};
  Adam opt(art.params, tc.learning_rate);
  Rng update_rng(derive_seed(seed, 0xB0B));

  std::vector<Rollout> buffer;
  std::size_t buffered_steps = 0;
  int updates = 0;

  auto flush = [&] {
    std::vector<Sample> samples;
    samples.reserve(buffered_steps);
    double sum_r = 0.0;
    for (auto& ro : buffer) {
      compute_advantages(ro, tc.gamma, tc.gae_lambda);
      sum_r += ro.reward.total;
      for (auto& s : ro.steps) samples.push_back(std::move(s));
    }
    normalize_advantages(samples);
    const auto st = ppo_update(art.params, opt, samples, tc, update_rng);
    TrainLogLine line{updates++, sum_r / static_cast<double>(buffer.size()), st.loss, st.clip_fraction, st.aborted};
    art.log.push_back(line);
    if (log_sink) {
      log_sink(line.to_json());
      if (st.aborted) log_sink("update aborted: " + st.diagnostics);
    }
    buffer.clear();
    buffered_steps = 0;
  };

  const int workers = std::max(1, tc.workers);
  for (int base = 0; base < tc.episodes; base += workers) {
    const int n = std::min(workers, tc.episodes - base);
    std::vector<Rollout> chunk(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    auto run = [&](int k) {
      try {
        chunk[static_cast<std::size_t>(k)] =
            run_episode(art.params, config, width, height, derive_seed(seed, static_cast<std::uint64_t>(base + k)), tc);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    };
    if (n == 1) {
      run(0);
    } else {
      std::vector<std::thread> threads;
      for (int k = 0; k < n; ++k) threads.emplace_back(run, k);
      for (auto& t : threads) t.join();
    }
    for (int k = 0; k < n; ++k) {
      const int episode = base + k;
      if (!errors[static_cast<std::size_t>(k)].empty()) {
        art.discarded.push_back("episode " + std::to_string(episode) + ": " + errors[static_cast<std::size_t>(k)]);
        if (log_sink) log_sink("discarded " + art.discarded.back());
        continue;
      }
      auto& ro = chunk[static_cast<std::size_t>(k)];
      art.curve.push_back({episode, ro.reward});
      buffered_steps += ro.steps.size();
      buffer.push_back(std::move(ro));
      if (buffered_steps >= static_cast<std::size_t>(tc.buffer_size)) flush();
    }
  }
  return art;
}

}  // namespace wfcrl::rl
