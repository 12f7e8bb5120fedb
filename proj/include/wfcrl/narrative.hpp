#pragma once

// Live edits on a finished map: clearing and blocking paths with a one-ring
// repair, and the object overlay. Edits are all-or-nothing and bump the map
// version when accepted.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wfcrl/engine.hpp"
#include "wfcrl/map.hpp"
#include "wfcrl/map_document.hpp"
#include "wfcrl/metrics.hpp"

namespace wfcrl {

enum class EditOp : std::uint8_t { ClearPath, BlockPath, PlaceObject, RemoveObject };

constexpr std::string_view to_string(EditOp op) noexcept {
  switch (op) {
    case EditOp::ClearPath: return "clear_path";
    case EditOp::BlockPath: return "block_path";
    case EditOp::PlaceObject: return "place_object";
    case EditOp::RemoveObject: return "remove_object";
  }
  return "?";
}

inline std::optional<EditOp> parse_edit_op(std::string_view s) {
  if (s == "clear_path") return EditOp::ClearPath;
  if (s == "block_path") return EditOp::BlockPath;
  if (s == "place_object") return EditOp::PlaceObject;
  if (s == "remove_object") return EditOp::RemoveObject;
  return std::nullopt;
}

struct EditCommand {
  EditOp op = EditOp::ClearPath;
  std::vector<int> cells;
  std::optional<PlacedObject> object;  // kind and label; cell comes from `cells`
  std::string actor;
  std::optional<int> base_version;  // client's view, checked by the service
};

struct CellChange {
  int cell = 0;
  std::string old_tile;
  std::string new_tile;
  TransformSpec transform;
};

struct EditResult {
  bool accepted = false;
  std::vector<CellChange> changed_cells;
  std::string reason;
  std::vector<std::string> warnings;
  int map_version = 0;
  std::vector<PlacedObject> objects_added;
  std::vector<int> objects_removed;  // cells
};

class EditParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json command_to_json(const EditCommand& c) {
  nlohmann::json j{{"op", std::string(to_string(c.op))}, {"cells", c.cells}, {"actor", c.actor}};
  if (c.object) j["object"] = {{"kind", std::string(to_string(c.object->kind))}, {"label", c.object->label}};
  if (c.base_version) j["base_version"] = *c.base_version;
  return j;
}

inline EditCommand command_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw EditParseError("edit command must be an object");
  EditCommand c;
  try {
    auto op = parse_edit_op(j.at("op").get<std::string>());
    if (!op) throw EditParseError("unknown op '" + j.at("op").get<std::string>() + "'");
    c.op = *op;
    c.cells = j.at("cells").get<std::vector<int>>();
    c.actor = j.value("actor", "");
    if (j.contains("base_version") && !j["base_version"].is_null()) c.base_version = j["base_version"].get<int>();
    if (j.contains("object") && !j["object"].is_null()) {
      const auto& o = j["object"];
      auto kind = parse_object_kind(o.at("kind").get<std::string>());
      if (!kind) throw EditParseError("unknown object kind '" + o.at("kind").get<std::string>() + "'");
      c.object = PlacedObject{*kind, 0, o.value("label", ""), 0};
    }
  } catch (const nlohmann::json::exception& e) {
    throw EditParseError(std::string("malformed edit command: ") + e.what());
  }
  if (c.cells.empty()) throw EditParseError("edit command names no cells");
  if (c.op == EditOp::PlaceObject && !c.object) throw EditParseError("place_object needs an object");
  return c;
}

inline nlohmann::json result_to_json(const EditResult& r) {
  using nlohmann::json;
  json changed = json::array();
  for (const auto& c : r.changed_cells)
    changed.push_back({{"cell", c.cell},
                       {"old", c.old_tile},
                       {"new", c.new_tile},
                       {"rotation", c.transform.rotation},
                       {"mirrored", c.transform.mirrored},
                       {"scale", c.transform.scale}});
  json added = json::array();
  for (const auto& o : r.objects_added) added.push_back(object_to_json(o));
  json j{{"accepted", r.accepted},
         {"changed_cells", changed},
         {"warnings", r.warnings},
         {"map_version", r.map_version},
         {"objects_delta", {{"added", added}, {"removed", r.objects_removed}}}};
  if (!r.accepted) j["reason"] = r.reason;
  return j;
}

namespace detail {

inline EditResult reject(const MapResult& m, std::string why) {
  EditResult r;
  r.reason = std::move(why);
  r.map_version = m.version;
  return r;
}

inline bool compatible_with_neighbors(const GridState& g, const TileSet& ts, int cell, TileIndex t) {
  bool ok = true;
  for_each_neighbor(g, cell, [&](int n, Direction d) {
    const auto& nc = g.cells[static_cast<std::size_t>(n)];
    if (nc.collapsed() && !ts.compatible(t, d, nc.tile)) ok = false;
  });
  return ok;
}

/// Re-draws the tile at `cell` among `allowed` using the neighbor-aware
/// weights with no policy term. Prefers tiles that agree with every
/// neighbor when `prefer_compatible` is set and any exist.
inline std::optional<TileIndex> redraw(GridState& g, const TileSet& ts, int cell, TileMask allowed,
                                       bool prefer_compatible, bool require_compatible, Rng& rng) {
  TileMask fits = 0;
  for (TileMask m = allowed; m != 0; m &= m - 1) {
    const auto t = static_cast<TileIndex>(std::countr_zero(m));
    if (compatible_with_neighbors(g, ts, cell, t)) fits |= TileMask{1} << t;
  }
  TileMask pool = allowed;
  if (require_compatible)
    pool = fits;
  else if (prefer_compatible && fits != 0)
    pool = fits;
  if (pool == 0) return std::nullopt;
  auto& c = g.cells[static_cast<std::size_t>(cell)];
  const Cell saved = c;
  c.tile = -1;
  c.candidates = pool;
  const TileIndex t = select_tile(g, ts, cell, rng, 0.0);
  c = saved;
  return t;
}

}  // namespace detail

/// Replaces target tiles with tiles of one class, then re-draws any direct
/// neighbor of an edited cell that no longer agrees with it.
inline EditResult retile(MapResult& map, const std::vector<int>& cells, const BiomeConfig& config, bool to_path) {
  const auto& ts = config.tileset;
  auto& g = map.grid;
  for (int c : cells)
    if (!g.in_bounds(c)) return detail::reject(map, "cell " + std::to_string(c) + " is out of bounds");
  if (!g.complete()) return detail::reject(map, "map is not fully collapsed");
  if (!to_path)
    for (int c : cells)
      if (map.object_at(c)) return detail::reject(map, "cell " + std::to_string(c) + " holds an object; remove it first");

  MapResult work = map;
  auto& wg = work.grid;
  Rng rng(derive_seed(map.seed, static_cast<std::uint64_t>(map.version) + 1));
  const TileMask target_class = to_path ? ts.path_mask() : ts.impassable_mask();
  if (target_class == 0) return detail::reject(map, std::string("tileset has no ") + (to_path ? "path" : "impassable") + " tiles");

  std::set<int> targets;
  std::vector<int> edited;
  for (int c : cells) {
    if (!targets.insert(c).second) continue;
    auto& cell = wg.cells[static_cast<std::size_t>(c)];
    if (ts.is_path(cell.tile) == to_path) continue;
    auto t = detail::redraw(wg, ts, c, target_class, true, false, rng);
    cell.tile = *t;
    cell.candidates = TileMask{1} << *t;
    cell.transform = draw_transform(ts.tile(*t), rng);
    cell.fallback = false;
    edited.push_back(c);
  }

  std::set<int> repaired;
  for (int c : edited) {
    for (Direction d : kDirections) {
      auto n = wg.neighbor(c, d);
      if (!n || targets.count(*n)) continue;
      auto& nc = wg.cells[static_cast<std::size_t>(*n)];
      if (ts.compatible(wg.cells[static_cast<std::size_t>(c)].tile, d, nc.tile)) continue;
      const bool was_path = ts.is_path(nc.tile);
      auto t = detail::redraw(wg, ts, *n, was_path ? ts.path_mask() : ts.impassable_mask(), true, true, rng);
      if (!t) {
        const auto* obj = work.object_at(*n);
        const bool door = obj && obj->kind == ObjectKind::LockedDoor;
        if (!door) t = detail::redraw(wg, ts, *n, ts.all_mask(), true, true, rng);
      }
      if (!t)
        return detail::reject(map, "no tile for neighbor cell " + std::to_string(*n) + " agrees with the edit");
      nc.tile = *t;
      nc.candidates = TileMask{1} << *t;
      nc.transform = draw_transform(ts.tile(*t), rng);
      nc.fallback = false;
      repaired.insert(*n);
    }
  }

  // Every pair with an edited or repaired side must now agree.
  std::set<int> touched(edited.begin(), edited.end());
  touched.insert(repaired.begin(), repaired.end());
  for (int c : touched) {
    std::optional<int> bad;
    for_each_neighbor(wg, c, [&](int n, Direction d) {
      if (!ts.compatible(wg.cells[static_cast<std::size_t>(c)].tile, d, wg.cells[static_cast<std::size_t>(n)].tile))
        bad = n;
    });
    if (bad)
      return detail::reject(map, "edit leaves cells " + std::to_string(c) + " and " + std::to_string(*bad) +
                                     " in disagreement");
  }

  for (const auto& o : work.objects)
    if (o.kind == ObjectKind::LockedDoor && !ts.is_path(wg.cells[static_cast<std::size_t>(o.cell)].tile))
      return detail::reject(map, "edit would put the locked door at cell " + std::to_string(o.cell) + " on an impassable tile");

  EditResult r;
  r.accepted = true;
  for (int c : touched) {
    const auto& before = g.cells[static_cast<std::size_t>(c)];
    const auto& after = wg.cells[static_cast<std::size_t>(c)];
    r.changed_cells.push_back({c, ts.tile(before.tile).id, ts.tile(after.tile).id, after.transform});
  }
  if (!to_path) {
    const int before = path_component_count(g, ts);
    const int after = path_component_count(wg, ts);
    if (after > before)
      r.warnings.push_back("blocking splits the walkable area: path components " + std::to_string(before) + " -> " +
                           std::to_string(after));
  }
  work.version = map.version + 1;
  r.map_version = work.version;
  map = std::move(work);
  return r;
}

inline EditResult clear_path(MapResult& map, const std::vector<int>& cells, const BiomeConfig& config) {
  return retile(map, cells, config, true);
}

inline EditResult block_path(MapResult& map, const std::vector<int>& cells, const BiomeConfig& config) {
  return retile(map, cells, config, false);
}

inline EditResult place_object(MapResult& map, PlacedObject object, const BiomeConfig& config) {
  if (!map.grid.in_bounds(object.cell))
    return detail::reject(map, "cell " + std::to_string(object.cell) + " is out of bounds");
  if (map.object_at(object.cell))
    return detail::reject(map, "cell " + std::to_string(object.cell) + " already holds an object");
  const auto& c = map.grid.cells[static_cast<std::size_t>(object.cell)];
  if (object.kind == ObjectKind::LockedDoor && !(c.collapsed() && config.tileset.is_path(c.tile)))
    return detail::reject(map, "a locked door needs a path tile");
  object.created_at = map.version + 1;
  map.objects.push_back(object);
  map.version += 1;
  EditResult r;
  r.accepted = true;
  r.map_version = map.version;
  r.objects_added.push_back(object);
  return r;
}

inline EditResult remove_object(MapResult& map, int cell) {
  auto it = std::find_if(map.objects.begin(), map.objects.end(), [cell](const PlacedObject& o) { return o.cell == cell; });
  if (it == map.objects.end()) return detail::reject(map, "no object at cell " + std::to_string(cell));
  map.objects.erase(it);
  map.version += 1;
  EditResult r;
  r.accepted = true;
  r.map_version = map.version;
  r.objects_removed.push_back(cell);
  return r;
}

inline EditResult apply_edit(MapResult& map, const EditCommand& cmd, const BiomeConfig& config) {
  if (cmd.cells.empty()) return detail::reject(map, "edit names no cells");
  switch (cmd.op) {
    case EditOp::ClearPath: return clear_path(map, cmd.cells, config);
    case EditOp::BlockPath: return block_path(map, cmd.cells, config);
    case EditOp::PlaceObject: {
      if (!cmd.object) return detail::reject(map, "place_object needs an object");
      PlacedObject o = *cmd.object;
      o.cell = cmd.cells.front();
      return place_object(map, o, config);
    }
    case EditOp::RemoveObject: return remove_object(map, cmd.cells.front());
  }
  return detail::reject(map, "unknown op");
}

/// Re-applies accepted commands in order. Throws if one of them no longer
/// applies, which means the log does not belong to this map.
inline MapResult replay_edits(MapResult map, const std::vector<EditCommand>& log, const BiomeConfig& config) {
  for (const auto& cmd : log) {
    const auto r = apply_edit(map, cmd, config);
    if (!r.accepted) throw std::runtime_error("edit log replay rejected a command: " + r.reason);
  }
  return map;
}

}  // namespace wfcrl
