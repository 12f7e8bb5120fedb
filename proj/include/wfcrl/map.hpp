#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <optional>
#include <vector>

#include "wfcrl/grid.hpp"

namespace wfcrl {

struct GenerationTrace {
  int steps_used = 0;  // collapse attempts, including ones undone by backtracking
  int max_steps = 0;
  int backtrack_count = 0;  // restore events
  int deadlock_fallbacks = 0;
  int budget_fills = 0;  // cells filled with the default tile after the step budget ran out
  double wall_time_ms = 0.0;
  std::vector<double> step_latency_ms;  // only filled when requested
  long sparse_decisions = 0;            // sparse-layout coin flips
  long sparse_applied = 0;
};

enum class ObjectKind : std::uint8_t { Trap, TreasureChest, Key, LockedDoor };

constexpr std::string_view to_string(ObjectKind k) noexcept {
  switch (k) {
    case ObjectKind::Trap: return "trap";
    case ObjectKind::TreasureChest: return "treasure_chest";
    case ObjectKind::Key: return "key";
    case ObjectKind::LockedDoor: return "locked_door";
  }
  return "?";
}

inline std::optional<ObjectKind> parse_object_kind(std::string_view s) {
  if (s == "trap") return ObjectKind::Trap;
  if (s == "treasure_chest") return ObjectKind::TreasureChest;
  if (s == "key") return ObjectKind::Key;
  if (s == "locked_door") return ObjectKind::LockedDoor;
  return std::nullopt;
}

struct PlacedObject {
  ObjectKind kind = ObjectKind::Trap;
  int cell = 0;
  std::string label;
  int created_at = 0;  // map version at which the object was placed
  friend bool operator==(const PlacedObject&, const PlacedObject&) = default;
};

/// A finished map: the collapsed grid (its collapse_order is the effective
/// placement sequence), the narrative overlay and the generation record.
struct MapResult {
  GridState grid;
  Biome biome = Biome::City;
  Layout layout = Layout::Continuous;
  std::uint64_t seed = 0;
  std::vector<PlacedObject> objects;
  GenerationTrace trace;
  int version = 0;

  [[nodiscard]] const PlacedObject* object_at(int cell) const {
    for (const auto& o : objects)
      if (o.cell == cell) return &o;
    return nullptr;
  }
};

}  // namespace wfcrl
