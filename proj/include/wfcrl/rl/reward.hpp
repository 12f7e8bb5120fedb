#pragma once

// Episode reward: completeness + biome coherence + efficiency.

#include "wfcrl/map.hpp"
#include "wfcrl/metrics.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl::rl {

inline constexpr double kDefaultK1 = 0.2;
inline constexpr double kDefaultK2 = 0.1;

struct RewardBreakdown {
  double completeness = 0.0;
  double coherence = 0.0;
  double efficiency = 0.0;
  double total = 0.0;
};

/// +1 for a clean map, -0.5 when the step budget ran out and cells were
/// filled instead of collapsed, -1 when the map carries fallback tiles or
/// adjacency violations.
inline double reward_completeness(const MapResult& m, const TileSet& ts) {
  if (m.trace.budget_fills > 0 || !m.grid.complete()) return -0.5;
  if (m.trace.deadlock_fallbacks > 0 || count_adjacency_violations(m.grid, ts) > 0) return -1.0;
  return 1.0;
}

inline double reward_biome_coherence(const MapResult& m, const BiomeConfig& config) {
  return biome_coherence(m.grid, config.tileset, config.layout);
}

/// k1 * (S_max - S_used) - k2 * backtracks. The normalized variant divides
/// by S_max so the term stays on the scale of the other two.
inline double reward_efficiency(const GenerationTrace& t, double k1 = kDefaultK1, double k2 = kDefaultK2,
                                bool normalized = false) {
  const double e = k1 * (t.max_steps - t.steps_used) - k2 * t.backtrack_count;
  return normalized && t.max_steps > 0 ? e / t.max_steps : e;
}

inline double total_reward(double completeness, double coherence, double efficiency) {
  return completeness + coherence + efficiency;
}

inline RewardBreakdown evaluate_reward(const MapResult& m, const BiomeConfig& config, double k1 = kDefaultK1,
                                       double k2 = kDefaultK2, bool normalized_efficiency = false) {
  RewardBreakdown r;
  r.completeness = reward_completeness(m, config.tileset);
  r.coherence = reward_biome_coherence(m, config);
  r.efficiency = reward_efficiency(m.trace, k1, k2, normalized_efficiency);
  r.total = total_reward(r.completeness, r.coherence, r.efficiency);
  return r;
}

}  // namespace wfcrl::rl
