#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "wfcrl/grid.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl::rl {

/// Collapsed/open bitmap of the grid, biome one-hot (city, desert, forest)
/// and a layout bit (1 = continuous).
struct Observation {
  std::vector<double> grid_bits;
  std::array<double, 3> biome_onehot{};
  double layout_bit = 0.0;

  [[nodiscard]] std::size_t size() const noexcept { return grid_bits.size() + 4; }

  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> v;
    flatten_into(v);
    return v;
  }
  void flatten_into(std::vector<double>& v) const {
    v.assign(grid_bits.begin(), grid_bits.end());
    v.insert(v.end(), biome_onehot.begin(), biome_onehot.end());
    v.push_back(layout_bit);
  }
};

/// Encodes `g`. When padded dimensions are given the bitmap uses that
/// row stride and the cells outside the grid stay 0.
inline Observation encode_observation(const GridState& g, const BiomeConfig& config, int padded_width = 0,
                                      int padded_height = 0) {
  const int pw = padded_width > 0 ? padded_width : g.width;
  const int ph = padded_height > 0 ? padded_height : g.height;
  if (g.width > pw || g.height > ph)
    throw std::invalid_argument("encode_observation: grid is larger than the padded observation");
  Observation obs;
  obs.grid_bits.assign(static_cast<std::size_t>(pw * ph), 0.0);
  for (int i = 0; i < g.size(); ++i)
    if (g.cells[static_cast<std::size_t>(i)].collapsed())
      obs.grid_bits[static_cast<std::size_t>(g.y_of(i) * pw + g.x_of(i))] = 1.0;
  obs.biome_onehot[static_cast<std::size_t>(config.biome)] = 1.0;
  obs.layout_bit = config.layout == Layout::Continuous ? 1.0 : 0.0;
  return obs;
}

inline int observation_size(int width, int height) { return width * height + 4; }

}  // namespace wfcrl::rl
