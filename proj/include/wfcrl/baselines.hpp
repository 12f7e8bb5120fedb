#pragma once

// Comparison generators: thresholded Perlin noise and cellular-automata
// caves. Both produce a path/impassable class per cell, then pick a concrete
// tile uniformly within the class. Adjacency rules are ignored on purpose.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wfcrl/grid.hpp"
#include "wfcrl/map.hpp"
#include "wfcrl/rng.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl {

struct PerlinConfig {
  double frequency = 0.15;
  int octaves = 3;
  double threshold = 0.55;  // noise above -> impassable
  std::uint64_t seed = 0;
};

struct CellularAutomataConfig {
  double initial_fill = 0.45;
  int iterations = 4;
  int birth_limit = 5;
  int death_limit = 3;
  std::uint64_t seed = 0;
};

/// Classic 2D gradient noise with a seeded permutation table. Output lies in
/// roughly [-1, 1].
class PerlinNoise {
 public:
  explicit PerlinNoise(std::uint64_t seed) {
    Rng rng(seed);
    std::array<int, 256> p{};
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    for (std::size_t i = 0; i < 512; ++i) perm_[i] = p[i & 255];
  }

  [[nodiscard]] double operator()(double x, double y) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const int xi = static_cast<int>(fx) & 255, yi = static_cast<int>(fy) & 255;
    const double xf = x - fx, yf = y - fy;
    const double u = fade(xf), v = fade(yf);
    const int aa = perm_[perm_[xi] + yi], ab = perm_[perm_[xi] + yi + 1];
    const int ba = perm_[perm_[xi + 1] + yi], bb = perm_[perm_[xi + 1] + yi + 1];
    const double x1 = lerp(grad(aa, xf, yf), grad(ba, xf - 1, yf), u);
    const double x2 = lerp(grad(ab, xf, yf - 1), grad(bb, xf - 1, yf - 1), u);
    return lerp(x1, x2, v);
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double lerp(double a, double b, double t) { return a + t * (b - a); }
  static double grad(int hash, double x, double y) {
    switch (hash & 7) {
      case 0: return x + y;
      case 1: return -x + y;
      case 2: return x - y;
      case 3: return -x - y;
      case 4: return x;
      case 5: return -x;
      case 6: return y;
      default: return -y;
    }
  }
  std::array<int, 512> perm_{};
};

/// Octave-summed noise per cell, rescaled to [0, 1]. Each octave samples at
/// a random offset so cell centers do not sit on lattice points.
inline std::vector<double> perlin_field(const PerlinConfig& pc, int width, int height) {
  if (!(pc.frequency > 0.0) || pc.octaves < 1) throw std::invalid_argument("perlin: frequency > 0 and octaves >= 1");
  PerlinNoise noise(pc.seed);
  Rng rng(derive_seed(pc.seed, 1));
  std::vector<std::pair<double, double>> offsets;
  for (int o = 0; o < pc.octaves; ++o) offsets.emplace_back(rng.uniform(0, 256), rng.uniform(0, 256));
  std::vector<double> field(static_cast<std::size_t>(width * height));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double sum = 0.0, amp = 1.0, norm = 0.0, freq = pc.frequency;
      for (int o = 0; o < pc.octaves; ++o) {
        sum += amp * noise(x * freq + offsets[static_cast<std::size_t>(o)].first,
                           y * freq + offsets[static_cast<std::size_t>(o)].second);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
      }
      field[static_cast<std::size_t>(y * width + x)] = std::clamp((sum / norm + 1.0) / 2.0, 0.0, 1.0);
    }
  return field;
}

namespace detail {

inline void check_dims(int width, int height) {
  if (width < 1 || width > kMaxGridSide || height < 1 || height > kMaxGridSide)
    throw std::out_of_range("grid dimensions must lie in [1, 15], got " + std::to_string(width) + "x" +
                            std::to_string(height));
}

inline std::vector<TileIndex> tiles_of(TileMask mask) {
  std::vector<TileIndex> out;
  for (TileMask m = mask; m != 0; m &= m - 1) out.push_back(static_cast<TileIndex>(std::countr_zero(m)));
  return out;
}

/// Turns a class map (true = impassable) into a finished MapResult.
inline MapResult materialize(const BiomeConfig& config, const std::vector<char>& impassable, int width, int height,
                             std::uint64_t seed, Rng& rng, bool record_latency,
                             std::chrono::steady_clock::time_point start) {
  using clock = std::chrono::steady_clock;
  const auto& ts = config.tileset;
  auto path = tiles_of(ts.path_mask());
  auto blocked = tiles_of(ts.impassable_mask());
  if (blocked.empty()) blocked = path;
  if (path.empty()) path = blocked;

  MapResult m;
  m.biome = config.biome;
  m.layout = config.layout;
  m.seed = seed;
  auto& g = m.grid;
  g.width = width;
  g.height = height;
  g.rng_seed = seed;
  g.cells.resize(static_cast<std::size_t>(width * height));
  for (int i = 0; i < width * height; ++i) {
    const auto t0 = clock::now();
    const auto& pool = impassable[static_cast<std::size_t>(i)] ? blocked : path;
    const TileIndex t = pool[rng.below(pool.size())];
    auto& c = g.cells[static_cast<std::size_t>(i)];
    c.tile = t;
    c.candidates = TileMask{1} << t;
    g.collapse_order.push_back({i, t});
    if (record_latency)
      m.trace.step_latency_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
  }
  g.step_count = width * height;
  g.rng = rng;
  m.trace.steps_used = width * height;
  m.trace.max_steps = width * height;
  m.trace.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
  return m;
}

}  // namespace detail

inline MapResult perlin_generate(const BiomeConfig& config, const PerlinConfig& pc, int width, int height,
                                 bool record_latency = false) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_dims(width, height);
  const auto field = perlin_field(pc, width, height);
  std::vector<char> impassable(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) impassable[i] = field[i] > pc.threshold ? 1 : 0;
  Rng rng(derive_seed(pc.seed, 2));
  return detail::materialize(config, impassable, width, height, pc.seed, rng, record_latency, start);
}

/// Random fill: 1 = impassable.
inline std::vector<char> ca_initial(const CellularAutomataConfig& cc, int width, int height, Rng& rng) {
  std::vector<char> grid(static_cast<std::size_t>(width * height));
  for (auto& v : grid) v = rng.bernoulli(cc.initial_fill) ? 1 : 0;
  return grid;
}

/// One synchronous smoothing pass. Cells outside the grid count as
/// impassable.
inline std::vector<char> ca_step(const std::vector<char>& grid, int width, int height,
                                 const CellularAutomataConfig& cc) {
  std::vector<char> next(grid.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int walls = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height)
            ++walls;
          else
            walls += grid[static_cast<std::size_t>(ny * width + nx)];
        }
      const auto i = static_cast<std::size_t>(y * width + x);
      if (walls > cc.birth_limit)
        next[i] = 1;
      else if (walls < cc.death_limit)
        next[i] = 0;
      else
        next[i] = grid[i];
    }
  return next;
}

/// Number of orthogonal cell pairs whose classes differ.
inline int class_boundary_length(const std::vector<char>& grid, int width, int height) {
  int n = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const char v = grid[static_cast<std::size_t>(y * width + x)];
      if (x + 1 < width && grid[static_cast<std::size_t>(y * width + x + 1)] != v) ++n;
      if (y + 1 < height && grid[static_cast<std::size_t>((y + 1) * width + x)] != v) ++n;
    }
  return n;
}

inline MapResult cellular_automata_generate(const BiomeConfig& config, const CellularAutomataConfig& cc, int width,
                                            int height, bool record_latency = false) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_dims(width, height);
  if (!(cc.initial_fill >= 0.0 && cc.initial_fill <= 1.0) || cc.iterations < 0)
    throw std::invalid_argument("cellular automata: initial_fill in [0, 1] and iterations >= 0");
  Rng rng(cc.seed);
  auto grid = ca_initial(cc, width, height, rng);
  for (int it = 0; it < cc.iterations; ++it) grid = ca_step(grid, width, height, cc);
  return detail::materialize(config, grid, width, height, cc.seed, rng, record_latency, start);
}

}  // namespace wfcrl
