#pragma once

// Map-quality measures shared by the reward function and the benchmark.

#include <vector>

#include "wfcrl/grid.hpp"
#include "wfcrl/map.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl {

/// Orthogonal pairs whose tiles are not mutually compatible. Each pair is
/// counted once. Requires a fully collapsed grid.
inline int count_adjacency_violations(const GridState& g, const TileSet& ts) {
  int violations = 0;
  for (int i = 0; i < g.size(); ++i) {
    const auto& c = g.cells[static_cast<std::size_t>(i)];
    for (Direction d : {Direction::Right, Direction::Down}) {
      auto n = g.neighbor(i, d);
      if (!n) continue;
      const auto& nc = g.cells[static_cast<std::size_t>(*n)];
      if (c.collapsed() && nc.collapsed() && !ts.compatible(c.tile, d, nc.tile)) ++violations;
    }
  }
  return violations;
}

/// Whether the tile at `cell` honors the adjacency relation with all its
/// neighbors and, in continuous layouts, a path tile touches another path.
inline bool cell_adheres(const GridState& g, const TileSet& ts, Layout layout, int cell) {
  const auto& c = g.cells[static_cast<std::size_t>(cell)];
  if (!c.collapsed()) return false;
  bool ok = true;
  bool has_path_neighbor = false;
  bool has_neighbor = false;
  for_each_neighbor(g, cell, [&](int n, Direction d) {
    const auto& nc = g.cells[static_cast<std::size_t>(n)];
    has_neighbor = true;
    if (!nc.collapsed() || !ts.compatible(c.tile, d, nc.tile)) ok = false;
    if (nc.collapsed() && ts.is_path(nc.tile)) has_path_neighbor = true;
  });
  if (layout == Layout::Continuous && ts.is_path(c.tile) && has_neighbor && !has_path_neighbor) ok = false;
  return ok;
}

/// Fraction of cells that adhere to the biome's adjacency and layout rules.
inline double biome_coherence(const GridState& g, const TileSet& ts, Layout layout) {
  if (g.size() == 0) return 0.0;
  int adherent = 0;
  for (int i = 0; i < g.size(); ++i) adherent += cell_adheres(g, ts, layout, i) ? 1 : 0;
  return static_cast<double>(adherent) / g.size();
}

/// Number of 4-connected components formed by path tiles.
inline int path_component_count(const GridState& g, const TileSet& ts) {
  std::vector<char> seen(static_cast<std::size_t>(g.size()), 0);
  std::vector<int> stack;
  int components = 0;
  for (int i = 0; i < g.size(); ++i) {
    const auto& c = g.cells[static_cast<std::size_t>(i)];
    if (seen[static_cast<std::size_t>(i)] || !c.collapsed() || !ts.is_path(c.tile)) continue;
    ++components;
    stack.push_back(i);
    seen[static_cast<std::size_t>(i)] = 1;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for_each_neighbor(g, cur, [&](int n, Direction) {
        const auto& nc = g.cells[static_cast<std::size_t>(n)];
        if (!seen[static_cast<std::size_t>(n)] && nc.collapsed() && ts.is_path(nc.tile)) {
          seen[static_cast<std::size_t>(n)] = 1;
          stack.push_back(n);
        }
      });
    }
  }
  return components;
}

inline double impassable_fraction(const GridState& g, const TileSet& ts) {
  if (g.size() == 0) return 0.0;
  int count = 0;
  for (const auto& c : g.cells) count += (c.collapsed() && !ts.is_path(c.tile)) ? 1 : 0;
  return static_cast<double>(count) / g.size();
}

struct CoherenceMetrics {
  double coherence = 0.0;
  int path_components = 0;
  double impassable_fraction = 0.0;
};

inline CoherenceMetrics coherence_metrics(const GridState& g, const BiomeConfig& config) {
  return {biome_coherence(g, config.tileset, config.layout), path_component_count(g, config.tileset),
          impassable_fraction(g, config.tileset)};
}

inline CoherenceMetrics coherence_metrics(const MapResult& m, const BiomeConfig& config) {
  return {biome_coherence(m.grid, config.tileset, m.layout), path_component_count(m.grid, config.tileset),
          impassable_fraction(m.grid, config.tileset)};
}

}  // namespace wfcrl
