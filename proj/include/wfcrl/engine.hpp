#pragma once

// Wave function collapse solver with neighbor-aware tile weights, layout
// strategies and stack-based backtracking.

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wfcrl/grid.hpp"
#include "wfcrl/map.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl {

inline constexpr double kBaseWeight = 1.0;
inline constexpr double kScoreOpen = 0.0;
inline constexpr double kScoreCompatible = 1.5;
inline constexpr double kScoreIncompatible = 0.5;
inline constexpr double kWeightFloor = 0.05;
inline constexpr int kDefaultMaxDepth = 50;

inline GridState init_grid(const BiomeConfig& config, int width, int height, std::uint64_t seed) {
  if (width < 1 || width > kMaxGridSide || height < 1 || height > kMaxGridSide)
    throw std::out_of_range("grid dimensions must lie in [1, 15], got " + std::to_string(width) + "x" +
                            std::to_string(height));
  GridState g;
  g.width = width;
  g.height = height;
  g.rng_seed = seed;
  g.rng = Rng(seed);
  Cell open;
  open.candidates = config.tileset.all_mask();
  g.cells.assign(static_cast<std::size_t>(width * height), open);
  return g;
}

/// An open cell of minimal entropy, ties broken uniformly. nullopt once every
/// cell is collapsed.
inline std::optional<int> select_cell(const GridState& g, Rng& rng) {
  int best = kMaxTiles + 1;
  std::vector<int> ties;
  for (int i = 0; i < g.size(); ++i) {
    const auto& c = g.cells[static_cast<std::size_t>(i)];
    if (c.collapsed()) continue;
    const int e = c.entropy();
    if (e < best) {
      best = e;
      ties.clear();
    }
    if (e == best) ties.push_back(i);
  }
  if (ties.empty()) return std::nullopt;
  return ties[rng.below(ties.size())];
}

/// Neighbor-aware weight of placing `tile` at `cell`, plus the policy term,
/// floored at kWeightFloor.
inline double tile_weight(const GridState& g, const TileSet& ts, int cell, TileIndex tile, double r_rl) {
  const auto& c = g.cells.at(static_cast<std::size_t>(cell));
  if (c.collapsed() || !((c.candidates >> tile) & 1u))
    throw std::logic_error("tile_weight: tile is not a candidate of the cell");
  double w = kBaseWeight;
  for_each_neighbor(g, cell, [&](int n, Direction d) {
    const auto& nc = g.cells[static_cast<std::size_t>(n)];
    if (!nc.collapsed())
      w += kScoreOpen;
    else
      w += ts.compatible(tile, d, nc.tile) ? kScoreCompatible : kScoreIncompatible;
  });
  return std::max(w + r_rl, kWeightFloor);
}

/// Smallest index j whose prefix sum reaches r.
inline std::size_t weighted_pick(std::span<const double> weights, double r) {
  double prefix = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    prefix += weights[j];
    if (prefix >= r) return j;
  }
  return weights.size() - 1;  // r == W with rounding in the last bit
}

inline TileIndex select_tile(const GridState& g, const TileSet& ts, int cell, Rng& rng, double r_rl) {
  const auto& c = g.cells.at(static_cast<std::size_t>(cell));
  if (c.collapsed() || c.candidates == 0) throw std::logic_error("select_tile: cell has no candidates");
  std::vector<TileIndex> options;
  std::vector<double> weights;
  double total = 0.0;
  for (TileMask m = c.candidates; m != 0; m &= m - 1) {
    const auto t = static_cast<TileIndex>(std::countr_zero(m));
    options.push_back(t);
    weights.push_back(tile_weight(g, ts, cell, t, r_rl));
    total += weights.back();
  }
  const double r = rng.uniform() * total;
  return options[weighted_pick(weights, r)];
}

inline TransformSpec draw_transform(const TileDef& def, Rng& rng) {
  TransformSpec t;
  if (def.transforms.rotatable) t.rotation = static_cast<int>(rng.below(4)) * 90;
  if (def.transforms.mirrorable) t.mirrored = rng.bernoulli(0.5);
  if (def.transforms.scalable) t.scale = rng.uniform(0.9, 1.1);
  return t;
}

inline void collapse_cell(GridState& g, const TileSet& ts, int cell, TileIndex tile, Rng& rng) {
  auto& c = g.cells.at(static_cast<std::size_t>(cell));
  if (c.collapsed() || !((c.candidates >> tile) & 1u))
    throw std::logic_error("collapse_cell: tile is not a candidate of the cell");
  c.tile = tile;
  c.candidates = TileMask{1} << tile;
  c.transform = draw_transform(ts.tile(tile), rng);
  ++g.step_count;
  g.collapse_order.push_back({cell, tile});
}

/// True when no collapsed impassable tile touches `cell`, diagonals included.
inline bool obstacle_free_surroundings(const GridState& g, const TileSet& ts, int cell) {
  const int x = g.x_of(cell), y = g.y_of(cell);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
      const auto& c = g.cells[static_cast<std::size_t>(ny * g.width + nx)];
      if (c.collapsed() && !ts.is_path(c.tile)) return false;
    }
  return true;
}

struct StrategyDecision {
  TileMask candidates = 0;
  bool applied = false;
};

/// Continuous-path restriction for the neighbor on side `d` of a freshly
/// placed path tile: path tiles that connect to it, plus impassable tiles
/// only where the neighbor has no obstacle around it, so walkable cells
/// always flow around obstacles. Sparse layouts apply the restriction with
/// probability sparse_constraint_probability and otherwise leave the
/// neighbor's candidates as they were.
inline StrategyDecision apply_layout_strategy(const GridState& g, int neighbor, TileIndex path_tile, Direction d,
                                              TileMask candidates, const BiomeConfig& config, Rng& rng) {
  const auto& ts = config.tileset;
  if (!ts.is_path(path_tile)) throw std::logic_error("apply_layout_strategy: collapsed tile is not a path tile");
  const bool apply =
      config.layout == Layout::Continuous || rng.bernoulli(config.sparse_constraint_probability);
  if (!apply) return {candidates, false};
  TileMask keep = ts.path_mask();
  if (obstacle_free_surroundings(g, ts, neighbor)) keep |= ts.impassable_mask();
  return {candidates & ts.compatible_mask(path_tile, d) & keep, true};
}

struct Contradiction {
  int cell = 0;
};

/// Constrains the four direct neighbors of the just-collapsed `from_cell`.
/// A collapsed neighbor that disagrees with the new tile makes `from_cell`
/// itself the contradiction; an open neighbor left with no candidates is
/// named otherwise. On contradiction the grid, random stream included, is
/// left as it was.
inline std::optional<Contradiction> propagate(GridState& g, int from_cell, const BiomeConfig& config,
                                              GenerationTrace* trace = nullptr) {
  const auto& ts = config.tileset;
  const TileIndex t = g.cells.at(static_cast<std::size_t>(from_cell)).tile;
  if (t < 0) throw std::logic_error("propagate: source cell is not collapsed");
  Rng rng = g.rng;
  std::array<std::pair<int, TileMask>, 4> updates{};
  int n_updates = 0;
  long decisions = 0, applied = 0;
  for (Direction d : kDirections) {
    auto n = g.neighbor(from_cell, d);
    if (!n) continue;
    const auto& nc = g.cells[static_cast<std::size_t>(*n)];
    if (nc.collapsed()) {
      if (!nc.fallback && !ts.compatible(t, d, nc.tile)) return Contradiction{from_cell};
      continue;
    }
    TileMask next;
    if (ts.is_path(t)) {
      auto decision = apply_layout_strategy(g, *n, t, d, nc.candidates, config, rng);
      if (config.layout == Layout::Sparse) {
        ++decisions;
        applied += decision.applied ? 1 : 0;
      }
      next = decision.candidates;
    } else {
      next = nc.candidates & ts.compatible_mask(t, d);
    }
    if (next == 0) return Contradiction{*n};
    updates[static_cast<std::size_t>(n_updates++)] = {*n, next};
  }
  for (int i = 0; i < n_updates; ++i) g.cells[static_cast<std::size_t>(updates[i].first)].candidates = updates[i].second;
  g.rng = rng;
  if (trace) {
    trace->sparse_decisions += decisions;
    trace->sparse_applied += applied;
  }
  return std::nullopt;
}

/// Adjacency filtering that never empties a cell or rejects: used around
/// fallback tiles, where violations are tolerated and flagged.
inline void propagate_lenient(GridState& g, int from_cell, const TileSet& ts) {
  const TileIndex t = g.cells[static_cast<std::size_t>(from_cell)].tile;
  for_each_neighbor(g, from_cell, [&](int n, Direction d) {
    auto& nc = g.cells[static_cast<std::size_t>(n)];
    if (nc.collapsed()) return;
    const TileMask next = nc.candidates & ts.compatible_mask(t, d);
    if (next != 0) nc.candidates = next;
  });
}

struct Snapshot {
  GridState state;  // grid before the attempted collapse
  int cell = 0;
  TileIndex tile = 0;  // the attempted tile, excluded on restore
};
using SnapshotStack = std::vector<Snapshot>;

inline void snapshot_and_push(const GridState& g, int cell, TileIndex tile, SnapshotStack& stack) {
  stack.push_back({g, cell, tile});
}

struct BacktrackOutcome {
  enum class Kind { Restored, DefaultTileFallback } kind = Kind::Restored;
  int cell = 0;  // fallback target when kind == DefaultTileFallback
};

/// Pops snapshots until one still has an alternative for its cell once the
/// attempted tile is excluded. Every pop counts against `depth`; reaching
/// `max_depth` or running out of snapshots asks the caller to place the
/// default tile at the cell that could not be satisfied.
inline BacktrackOutcome backtrack(GridState& g, SnapshotStack& stack, int& depth, int max_depth,
                                  int contradicted_cell) {
  int target = contradicted_cell;
  while (true) {
    if (stack.empty() || depth >= max_depth) return {BacktrackOutcome::Kind::DefaultTileFallback, target};
    Snapshot snap = std::move(stack.back());
    stack.pop_back();
    ++depth;
    g = std::move(snap.state);
    auto& c = g.cells[static_cast<std::size_t>(snap.cell)];
    c.candidates &= ~(TileMask{1} << snap.tile);
    if (c.candidates != 0) return {BacktrackOutcome::Kind::Restored, snap.cell};
    target = snap.cell;
  }
}

inline void place_default_tile(GridState& g, const BiomeConfig& config, int cell) {
  auto& c = g.cells.at(static_cast<std::size_t>(cell));
  if (c.collapsed()) {
    // The rejected tile was the latest placement; the default replaces it.
    std::erase_if(g.collapse_order, [cell](const CollapseRecord& r) { return r.cell == cell; });
    --g.step_count;
  }
  c.tile = config.default_tile;
  c.candidates = TileMask{1} << config.default_tile;
  c.transform = {};
  c.fallback = true;
  ++g.step_count;
  g.collapse_order.push_back({cell, config.default_tile});
  propagate_lenient(g, cell, config.tileset);
}

/// Supplies r_RL once per collapse decision.
using WeightAdjuster = std::function<double(const GridState&, int cell)>;

struct GenerateOptions {
  int max_depth = kDefaultMaxDepth;
  int max_steps = 0;  // 0 selects 2 * width * height
  bool record_step_latency = false;
  WeightAdjuster adjuster;
};

inline MapResult generate(const BiomeConfig& config, int width, int height, std::uint64_t seed,
                          const GenerateOptions& options = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  MapResult result;
  result.biome = config.biome;
  result.layout = config.layout;
  result.seed = seed;
  GridState g = init_grid(config, width, height, seed);
  auto& trace = result.trace;
  trace.max_steps = options.max_steps > 0 ? options.max_steps : 2 * width * height;

  SnapshotStack stack;
  stack.reserve(static_cast<std::size_t>(g.size()));
  int depth = 0;
  while (true) {
    const auto step_start = clock::now();
    auto cell = select_cell(g, g.rng);
    if (!cell) break;
    if (trace.steps_used >= trace.max_steps) {
      for (int i = 0; i < g.size(); ++i) {
        auto& c = g.cells[static_cast<std::size_t>(i)];
        if (c.collapsed()) continue;
        c.tile = config.default_tile;
        c.candidates = TileMask{1} << config.default_tile;
        c.transform = {};
        c.fallback = true;
        g.collapse_order.push_back({i, config.default_tile});
        ++trace.budget_fills;
      }
      break;
    }
    const double r_rl = options.adjuster ? options.adjuster(g, *cell) : 0.0;
    const TileIndex tile = select_tile(g, config.tileset, *cell, g.rng, r_rl);
    snapshot_and_push(g, *cell, tile, stack);
    ++trace.steps_used;
    collapse_cell(g, config.tileset, *cell, tile, g.rng);
    if (auto contradiction = propagate(g, *cell, config, &trace)) {
      const int before = depth;
      auto outcome = backtrack(g, stack, depth, options.max_depth, contradiction->cell);
      trace.backtrack_count += depth - before;
      if (outcome.kind == BacktrackOutcome::Kind::DefaultTileFallback) {
        place_default_tile(g, config, outcome.cell);
        ++trace.deadlock_fallbacks;
        if (outcome.cell != *cell && g.cells[static_cast<std::size_t>(*cell)].collapsed())
          propagate_lenient(g, *cell, config.tileset);
      }
    }
    if (options.record_step_latency)
      trace.step_latency_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - step_start).count());
  }
  result.grid = std::move(g);
  trace.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
  return result;
}

}  // namespace wfcrl
