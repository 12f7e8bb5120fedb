#pragma once

// Locating and loading the bundled tileset files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "wfcrl/tileset.hpp"

namespace wfcrl {

inline constexpr const char* kTilesetDirEnv = "WFCRL_TILESETS";

/// $WFCRL_TILESETS, else the build-time default, else ./data/tilesets.
inline std::filesystem::path default_tileset_dir() {
  if (const char* env = std::getenv(kTilesetDirEnv); env && *env) return env;
#ifdef WFCRL_DEFAULT_TILESETS
  return WFCRL_DEFAULT_TILESETS;
#else
  return "data/tilesets";
#endif
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline BiomeConfig load_tileset_file(const std::filesystem::path& path) {
  return load_tileset(read_text_file(path));
}

inline std::filesystem::path tileset_path(const std::filesystem::path& dir, Biome b) {
  return dir / (std::string(to_string(b)) + ".tiles.json");
}

inline BiomeConfig load_biome(Biome b, const std::filesystem::path& dir = default_tileset_dir()) {
  auto cfg = load_tileset_file(tileset_path(dir, b));
  if (cfg.biome != b)
    throw TilesetValidationError(tileset_path(dir, b).string() + " declares biome '" +
                                 std::string(to_string(cfg.biome)) + "'");
  return cfg;
}

inline std::map<Biome, BiomeConfig> load_all_biomes(const std::filesystem::path& dir = default_tileset_dir()) {
  std::map<Biome, BiomeConfig> out;
  for (Biome b : {Biome::City, Biome::Desert, Biome::Forest}) out.emplace(b, load_biome(b, dir));
  return out;
}

}  // namespace wfcrl
