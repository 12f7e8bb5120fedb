// Generates a forest map and prints it.

#include <iostream>

#include "wfcrl/engine.hpp"
#include "wfcrl/fixtures.hpp"
#include "wfcrl/map_document.hpp"

int main() {
  const auto forest = wfcrl::load_biome(wfcrl::Biome::Forest);
  const auto map = wfcrl::generate(forest, 12, 8, 2024);
  std::cout << wfcrl::render_text(map, forest.tileset);
  std::cout << map.trace.backtrack_count << " backtracks\n";
}
