#pragma once

// Map documents (JSON) and the plain-text renderer.

#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "wfcrl/map.hpp"
#include "wfcrl/tileset.hpp"

namespace wfcrl {

inline constexpr int kMapSchemaVersion = 1;

class MapDocumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json cell_to_json(const Cell& c, const TileSet& ts) {
  return {{"tile", c.collapsed() ? nlohmann::json(ts.tile(c.tile).id) : nlohmann::json(nullptr)},
          {"rotation", c.transform.rotation},
          {"mirrored", c.transform.mirrored},
          {"scale", c.transform.scale},
          {"fallback", c.fallback}};
}

inline nlohmann::json object_to_json(const PlacedObject& o) {
  return {{"kind", std::string(to_string(o.kind))}, {"cell", o.cell}, {"label", o.label}, {"created_at", o.created_at}};
}

inline PlacedObject object_from_json(const nlohmann::json& j) {
  PlacedObject o;
  auto kind = parse_object_kind(j.at("kind").get<std::string>());
  if (!kind) throw MapDocumentError("unknown object kind '" + j.at("kind").get<std::string>() + "'");
  o.kind = *kind;
  o.cell = j.at("cell").get<int>();
  o.label = j.value("label", "");
  o.created_at = j.value("created_at", 0);
  return o;
}

/// Full document. `include_timing` false writes wall_time_ms as 0 so that
/// repeated runs produce identical bytes.
inline nlohmann::json map_to_json(const MapResult& m, const TileSet& ts, bool include_timing = true) {
  using nlohmann::json;
  json cells = json::array();
  for (const auto& c : m.grid.cells) cells.push_back(cell_to_json(c, ts));
  json objects = json::array();
  for (const auto& o : m.objects) objects.push_back(object_to_json(o));
  json order = json::array();
  for (const auto& r : m.grid.collapse_order) order.push_back({r.cell, ts.tile(r.tile).id});
  return {{"schema_version", kMapSchemaVersion},
          {"version", m.version},
          {"biome", std::string(to_string(m.biome))},
          {"layout", std::string(to_string(m.layout))},
          {"width", m.grid.width},
          {"height", m.grid.height},
          {"seed", m.seed},
          {"cells", cells},
          {"objects", objects},
          {"trace",
           {{"steps_used", m.trace.steps_used},
            {"max_steps", m.trace.max_steps},
            {"backtracks", m.trace.backtrack_count},
            {"deadlock_fallbacks", m.trace.deadlock_fallbacks},
            {"budget_fills", m.trace.budget_fills},
            {"wall_time_ms", include_timing ? m.trace.wall_time_ms : 0.0},
            {"collapse_order", order}}}};
}

inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(); }

/// Rebuilds a MapResult from its document. Step latencies and sparse
/// counters are not part of the document and come back empty.
inline MapResult map_from_json(const nlohmann::json& j, const TileSet& ts) {
  try {
    if (j.at("schema_version").get<int>() != kMapSchemaVersion) throw MapDocumentError("unsupported schema_version");
    MapResult m;
    auto biome = parse_biome(j.at("biome").get<std::string>());
    auto layout = parse_layout(j.at("layout").get<std::string>());
    if (!biome || !layout) throw MapDocumentError("unknown biome or layout");
    m.biome = *biome;
    m.layout = *layout;
    m.version = j.value("version", 0);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.grid.width = j.at("width").get<int>();
    m.grid.height = j.at("height").get<int>();
    m.grid.rng_seed = m.seed;
    m.grid.rng = Rng(m.seed);
    const auto& cells = j.at("cells");
    if (static_cast<int>(cells.size()) != m.grid.width * m.grid.height) throw MapDocumentError("cell count mismatch");
    for (const auto& cj : cells) {
      Cell c;
      if (cj.at("tile").is_null()) {
        c.candidates = ts.all_mask();
      } else {
        c.tile = ts.index_of(cj.at("tile").get<std::string>());
        c.candidates = TileMask{1} << c.tile;
      }
      c.transform = {cj.at("rotation").get<int>(), cj.at("mirrored").get<bool>(), cj.at("scale").get<double>()};
      c.fallback = cj.value("fallback", false);
      m.grid.cells.push_back(c);
    }
    for (const auto& oj : j.at("objects")) m.objects.push_back(object_from_json(oj));
    const auto& t = j.at("trace");
    m.trace.steps_used = t.at("steps_used").get<int>();
    m.trace.max_steps = t.at("max_steps").get<int>();
    m.trace.backtrack_count = t.at("backtracks").get<int>();
    m.trace.deadlock_fallbacks = t.at("deadlock_fallbacks").get<int>();
    m.trace.budget_fills = t.value("budget_fills", 0);
    m.trace.wall_time_ms = t.at("wall_time_ms").get<double>();
    for (const auto& r : t.value("collapse_order", nlohmann::json::array()))
      m.grid.collapse_order.push_back({r.at(0).get<int>(), ts.index_of(r.at(1).get<std::string>())});
    m.grid.step_count = static_cast<int>(m.grid.collapse_order.size());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MapDocumentError(std::string("malformed map document: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw MapDocumentError(e.what());
  }
}

/// One display character per cell, one line per row. Open cells print '?'.
/// With `show_objects`, objects replace the tile glyph (t, $, k, D).
inline std::string render_text(const MapResult& m, const TileSet& ts, bool show_objects = false) {
  std::string out;
  const auto& g = m.grid;
  out.reserve(static_cast<std::size_t>((g.width + 1) * g.height));
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int i = y * g.width + x;
      const auto& c = g.cells[static_cast<std::size_t>(i)];
      char ch = c.collapsed() ? ts.tile(c.tile).display_char : '?';
      if (show_objects)
        if (const auto* o = m.object_at(i)) {
          constexpr char glyphs[] = {'t', '$', 'k', 'D'};
          ch = glyphs[static_cast<int>(o->kind)];
        }
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace wfcrl
