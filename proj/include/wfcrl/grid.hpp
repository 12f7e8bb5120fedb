#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "wfcrl/rng.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl {

inline constexpr int kMaxGridSide = 15;

struct TransformSpec {
  int rotation = 0;  // degrees: 0, 90, 180 or 270
  bool mirrored = false;
  double scale = 1.0;
  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct Cell {
  TileMask candidates = 0;  // meaningful while open
  TileIndex tile = -1;      // >= 0 once collapsed
  TransformSpec transform;
  bool fallback = false;    // placed by deadlock or budget fallback

  [[nodiscard]] bool collapsed() const noexcept { return tile >= 0; }
  [[nodiscard]] int entropy() const noexcept { return collapsed() ? 0 : std::popcount(candidates); }
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct CollapseRecord {
  int cell = 0;
  TileIndex tile = 0;
  friend bool operator==(const CollapseRecord&, const CollapseRecord&) = default;
};

/// Mutable solver state. Copying it (including the random stream) is the
/// snapshot used for backtracking.
struct GridState {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  std::uint64_t rng_seed = 0;
  int step_count = 0;
  Rng rng;
  std::vector<CollapseRecord> collapse_order;

  [[nodiscard]] int size() const noexcept { return width * height; }
  [[nodiscard]] int x_of(int index) const noexcept { return index % width; }
  [[nodiscard]] int y_of(int index) const noexcept { return index / width; }
  [[nodiscard]] bool in_bounds(int index) const noexcept { return index >= 0 && index < size(); }

  /// In-grid orthogonal neighbor of `index` on side `d`.
  [[nodiscard]] std::optional<int> neighbor(int index, Direction d) const noexcept {
    const int x = x_of(index), y = y_of(index);
    switch (d) {
      case Direction::Up: return y > 0 ? std::optional<int>(index - width) : std::nullopt;
      case Direction::Down: return y + 1 < height ? std::optional<int>(index + width) : std::nullopt;
      case Direction::Left: return x > 0 ? std::optional<int>(index - 1) : std::nullopt;
      case Direction::Right: return x + 1 < width ? std::optional<int>(index + 1) : std::nullopt;
    }
    return std::nullopt;
  }

  [[nodiscard]] bool complete() const noexcept {
    for (const auto& c : cells)
      if (!c.collapsed()) return false;
    return true;
  }

  friend bool operator==(const GridState&, const GridState&) = default;
};

/// Calls f(neighbor_index, direction) for each in-grid orthogonal neighbor,
/// in the order up, down, left, right.
template <typename F>
void for_each_neighbor(const GridState& g, int index, F&& f) {
  for (Direction d : kDirections)
    if (auto n = g.neighbor(index, d)) f(*n, d);
}

}  // namespace wfcrl
