#pragma once

// Tile and biome data model, tileset document loading and adjacency queries.

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace wfcrl {

using TileIndex = int;
using TileMask = std::uint64_t;

inline constexpr int kMaxTiles = 64;

enum class Direction : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr std::array<Direction, 4> kDirections{Direction::Up, Direction::Down, Direction::Left,
                                                      Direction::Right};

constexpr Direction opposite(Direction d) noexcept {
  switch (d) {
    case Direction::Up: return Direction::Down;
    case Direction::Down: return Direction::Up;
    case Direction::Left: return Direction::Right;
    case Direction::Right: return Direction::Left;
  }
  return d;
}

constexpr std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::Up: return "up";
    case Direction::Down: return "down";
    case Direction::Left: return "left";
    case Direction::Right: return "right";
  }
  return "?";
}

enum class TileKind : std::uint8_t { Path, Impassable };
enum class Biome : std::uint8_t { City = 0, Desert = 1, Forest = 2 };
enum class Layout : std::uint8_t { Continuous = 0, Sparse = 1 };

constexpr std::string_view to_string(TileKind k) noexcept {
  return k == TileKind::Path ? "path" : "impassable";
}
constexpr std::string_view to_string(Biome b) noexcept {
  switch (b) {
    case Biome::City: return "city";
    case Biome::Desert: return "desert";
    case Biome::Forest: return "forest";
  }
  return "?";
}
constexpr std::string_view to_string(Layout l) noexcept {
  return l == Layout::Continuous ? "continuous" : "sparse";
}

inline std::optional<Biome> parse_biome(std::string_view s) {
  if (s == "city") return Biome::City;
  if (s == "desert") return Biome::Desert;
  if (s == "forest") return Biome::Forest;
  return std::nullopt;
}
inline std::optional<Layout> parse_layout(std::string_view s) {
  if (s == "continuous") return Layout::Continuous;
  if (s == "sparse") return Layout::Sparse;
  return std::nullopt;
}

constexpr Layout default_layout(Biome b) noexcept {
  return b == Biome::City ? Layout::Continuous : Layout::Sparse;
}

struct TransformFlags {
  bool rotatable = false;
  bool mirrorable = false;
  bool scalable = false;
  friend bool operator==(const TransformFlags&, const TransformFlags&) = default;
};

struct TileDef {
  std::string id;
  TileKind kind = TileKind::Path;
  std::array<std::vector<std::string>, 4> allowed;  // indexed by Direction
  TransformFlags transforms;
  std::string asset_ref;
  char display_char = '?';
  friend bool operator==(const TileDef&, const TileDef&) = default;
};

/// Immutable after construction. Adjacency is kept both as the declared
/// per-direction id lists and as bitmasks over tile indices.
class TileSet {
 public:
  TileSet() = default;

  /// Builds index tables. Throws std::invalid_argument on duplicate ids,
  /// dangling neighbor ids or more than kMaxTiles tiles.
  explicit TileSet(std::vector<TileDef> tiles) : tiles_(std::move(tiles)) {
    if (tiles_.empty()) throw std::invalid_argument("tileset has no tiles");
    if (tiles_.size() > kMaxTiles) throw std::invalid_argument("tileset has more than 64 tiles");
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
      if (!index_.emplace(tiles_[i].id, static_cast<TileIndex>(i)).second)
        throw std::invalid_argument("duplicate tile id '" + tiles_[i].id + "'");
    }
    allowed_.assign(tiles_.size(), {});
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
      for (Direction d : kDirections) {
        for (const auto& n : tiles_[i].allowed[static_cast<int>(d)]) {
          auto it = index_.find(n);
          if (it == index_.end())
            throw std::invalid_argument("tile '" + tiles_[i].id + "' " + std::string(to_string(d)) +
                                        ": unknown neighbor id '" + n + "'");
          allowed_[i][static_cast<int>(d)] |= TileMask{1} << it->second;
        }
      }
      if (tiles_[i].kind == TileKind::Path)
        path_mask_ |= TileMask{1} << i;
      else
        impassable_mask_ |= TileMask{1} << i;
    }
    // Mutual relation: b is compatible on side d of a iff a lists b on d and
    // b lists a on the opposite side. Equal to `allowed_` for symmetric sets.
    compatible_.assign(tiles_.size(), {});
    for (std::size_t a = 0; a < tiles_.size(); ++a)
      for (Direction d : kDirections)
        for (std::size_t b = 0; b < tiles_.size(); ++b)
          if (lists(static_cast<TileIndex>(a), d, static_cast<TileIndex>(b)) &&
              lists(static_cast<TileIndex>(b), opposite(d), static_cast<TileIndex>(a)))
            compatible_[a][static_cast<int>(d)] |= TileMask{1} << b;
  }

  [[nodiscard]] int size() const noexcept { return static_cast<int>(tiles_.size()); }
  [[nodiscard]] const std::vector<TileDef>& tiles() const noexcept { return tiles_; }
  [[nodiscard]] const TileDef& tile(TileIndex i) const { return tiles_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] TileMask all_mask() const noexcept {
    return size() == 64 ? ~TileMask{0} : (TileMask{1} << size()) - 1;
  }
  [[nodiscard]] TileMask path_mask() const noexcept { return path_mask_; }
  [[nodiscard]] TileMask impassable_mask() const noexcept { return impassable_mask_; }

  [[nodiscard]] std::optional<TileIndex> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  [[nodiscard]] TileIndex index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw std::out_of_range("unknown tile id '" + std::string(id) + "'");
    return *i;
  }

  /// True when `a` declares `b` as an allowed neighbor on side `d`.
  [[nodiscard]] bool lists(TileIndex a, Direction d, TileIndex b) const {
    return (allowed_[static_cast<std::size_t>(a)][static_cast<int>(d)] >> b) & 1u;
  }
  /// Tiles that may sit on side `d` of `a` with both tiles agreeing.
  [[nodiscard]] TileMask compatible_mask(TileIndex a, Direction d) const {
    return compatible_[static_cast<std::size_t>(a)][static_cast<int>(d)];
  }
  [[nodiscard]] bool compatible(TileIndex a, Direction d, TileIndex b) const {
    return (compatible_mask(a, d) >> b) & 1u;
  }
  [[nodiscard]] bool is_path(TileIndex t) const { return (path_mask_ >> t) & 1u; }

  friend bool operator==(const TileSet& a, const TileSet& b) { return a.tiles_ == b.tiles_; }

 private:
  std::vector<TileDef> tiles_;
  std::unordered_map<std::string, TileIndex> index_;
  std::vector<std::array<TileMask, 4>> allowed_;
  std::vector<std::array<TileMask, 4>> compatible_;
  TileMask path_mask_ = 0;
  TileMask impassable_mask_ = 0;
};

struct BiomeConfig {
  Biome biome = Biome::City;
  Layout layout = Layout::Continuous;
  TileSet tileset;
  TileIndex default_tile = 0;
  double sparse_constraint_probability = 0.5;
};

struct ValidationIssue {
  std::string tile;
  Direction direction = Direction::Up;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<std::string> warnings;
  [[nodiscard]] bool ok() const noexcept { return errors.empty(); }
};

class TilesetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Malformed document or schema violation.
class TilesetParseError : public TilesetError {
 public:
  using TilesetError::TilesetError;
};
/// Well-formed document whose content breaks a tileset invariant.
class TilesetValidationError : public TilesetError {
 public:
  using TilesetError::TilesetError;
};

namespace detail {

inline std::size_t line_of(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> known,
                           const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool found = false;
    for (auto k : known) found = found || key == k;
    if (!found) throw TilesetParseError(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
T require(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw TilesetParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw TilesetParseError(where + "." + key + ": wrong type");
  }
}

template <typename T>
T optional_field(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw TilesetParseError(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

/// Parses a tileset document. Throws TilesetParseError for malformed text or
/// schema violations and TilesetValidationError for content errors such as a
/// neighbor id that names no tile.
inline BiomeConfig load_tileset(std::string_view document) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(document);
  } catch (const json::parse_error& e) {
    throw TilesetParseError("line " + std::to_string(detail::line_of(document, e.byte)) + ": " + e.what());
  }
  if (!root.is_object()) throw TilesetParseError("document: expected an object");
  detail::reject_unknown(root,
                         {"schema_version", "biome", "layout", "default_tile", "sparse_constraint_probability",
                          "tiles"},
                         "document");
  if (detail::require<int>(root, "schema_version", "document") != 1)
    throw TilesetParseError("schema_version: expected 1");

  BiomeConfig cfg;
  const auto biome_name = detail::require<std::string>(root, "biome", "document");
  auto biome = parse_biome(biome_name);
  if (!biome) throw TilesetParseError("biome: unknown biome '" + biome_name + "'");
  cfg.biome = *biome;
  cfg.layout = default_layout(cfg.biome);
  if (root.contains("layout")) {
    const auto layout_name = detail::require<std::string>(root, "layout", "document");
    auto layout = parse_layout(layout_name);
    if (!layout) throw TilesetParseError("layout: unknown layout '" + layout_name + "'");
    cfg.layout = *layout;
  }
  cfg.sparse_constraint_probability =
      detail::optional_field<double>(root, "sparse_constraint_probability", 0.5, "document");
  if (!(cfg.sparse_constraint_probability >= 0.0 && cfg.sparse_constraint_probability <= 1.0))
    throw TilesetValidationError("sparse_constraint_probability: must lie in [0, 1]");

  const auto& tiles_json = root.find("tiles");
  if (tiles_json == root.end() || !tiles_json->is_array())
    throw TilesetParseError("document: 'tiles' must be an array");

  std::vector<TileDef> tiles;
  for (std::size_t i = 0; i < tiles_json->size(); ++i) {
    const auto& t = (*tiles_json)[i];
    const std::string where = "tiles[" + std::to_string(i) + "]";
    if (!t.is_object()) throw TilesetParseError(where + ": expected an object");
    detail::reject_unknown(t, {"id", "kind", "display_char", "transforms", "allowed", "asset_ref"}, where);
    TileDef def;
    def.id = detail::require<std::string>(t, "id", where);
    if (def.id.empty()) throw TilesetParseError(where + ".id: must not be empty");
    const auto kind = detail::require<std::string>(t, "kind", where);
    if (kind == "path")
      def.kind = TileKind::Path;
    else if (kind == "impassable")
      def.kind = TileKind::Impassable;
    else
      throw TilesetParseError(where + ".kind: expected 'path' or 'impassable'");
    const auto glyph = detail::optional_field<std::string>(t, "display_char", def.id.substr(0, 1), where);
    if (glyph.size() != 1) throw TilesetParseError(where + ".display_char: expected a single character");
    def.display_char = glyph[0];
    def.asset_ref = detail::optional_field<std::string>(t, "asset_ref", "", where);
    if (auto tr = t.find("transforms"); tr != t.end()) {
      if (!tr->is_object()) throw TilesetParseError(where + ".transforms: expected an object");
      detail::reject_unknown(*tr, {"rotatable", "mirrorable", "scalable"}, where + ".transforms");
      def.transforms.rotatable = detail::optional_field<bool>(*tr, "rotatable", false, where + ".transforms");
      def.transforms.mirrorable = detail::optional_field<bool>(*tr, "mirrorable", false, where + ".transforms");
      def.transforms.scalable = detail::optional_field<bool>(*tr, "scalable", false, where + ".transforms");
    }
    auto allowed = t.find("allowed");
    if (allowed == t.end() || !allowed->is_object())
      throw TilesetParseError(where + ": missing object field 'allowed'");
    detail::reject_unknown(*allowed, {"up", "down", "left", "right"}, where + ".allowed");
    for (Direction d : kDirections) {
      const std::string key(to_string(d));
      def.allowed[static_cast<int>(d)] =
          detail::require<std::vector<std::string>>(*allowed, key.c_str(), where + ".allowed");
    }
    tiles.push_back(std::move(def));
  }

  try {
    cfg.tileset = TileSet(std::move(tiles));
  } catch (const std::invalid_argument& e) {
    throw TilesetValidationError(e.what());
  }

  const auto default_id = detail::require<std::string>(root, "default_tile", "document");
  auto def = cfg.tileset.find(default_id);
  if (!def) throw TilesetValidationError("default_tile: unknown tile id '" + default_id + "'");
  if (!cfg.tileset.is_path(*def))
    throw TilesetValidationError("default_tile: '" + default_id + "' must be a path tile");
  cfg.default_tile = *def;
  return cfg;
}

inline nlohmann::json tileset_to_json(const BiomeConfig& cfg) {
  using nlohmann::json;
  json tiles = json::array();
  for (const auto& t : cfg.tileset.tiles()) {
    json allowed = json::object();
    for (Direction d : kDirections) allowed[std::string(to_string(d))] = t.allowed[static_cast<int>(d)];
    tiles.push_back({{"id", t.id},
                     {"kind", std::string(to_string(t.kind))},
                     {"display_char", std::string(1, t.display_char)},
                     {"transforms",
                      {{"rotatable", t.transforms.rotatable},
                       {"mirrorable", t.transforms.mirrorable},
                       {"scalable", t.transforms.scalable}}},
                     {"allowed", allowed},
                     {"asset_ref", t.asset_ref}});
  }
  return {{"schema_version", 1},
          {"biome", std::string(to_string(cfg.biome))},
          {"layout", std::string(to_string(cfg.layout))},
          {"default_tile", cfg.tileset.tile(cfg.default_tile).id},
          {"sparse_constraint_probability", cfg.sparse_constraint_probability},
          {"tiles", tiles}};
}

/// Lists every declaration "A allows B on side d" that B does not mirror
/// with "B allows A on the opposite side".
inline ValidationReport check_symmetry(const TileSet& ts) {
  ValidationReport report;
  for (TileIndex a = 0; a < ts.size(); ++a)
    for (Direction d : kDirections)
      for (TileIndex b = 0; b < ts.size(); ++b)
        if (ts.lists(a, d, b) && !ts.lists(b, opposite(d), a))
          report.errors.push_back({ts.tile(a).id, d,
                                   "'" + ts.tile(a).id + "' allows '" + ts.tile(b).id + "' on " +
                                       std::string(to_string(d)) + " but '" + ts.tile(b).id +
                                       "' does not allow '" + ts.tile(a).id + "' on " +
                                       std::string(to_string(opposite(d)))});
  for (TileIndex a = 0; a < ts.size(); ++a) {
    bool isolated = true;
    for (Direction d : kDirections) isolated = isolated && ts.compatible_mask(a, d) == 0;
    if (isolated) report.warnings.push_back("tile '" + ts.tile(a).id + "' has no compatible neighbor on any side");
  }
  return report;
}

}  // namespace wfcrl
