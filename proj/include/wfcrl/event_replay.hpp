#pragma once

// Client-side reducer for the map event stream: start from a snapshot
// event's document and fold collapse and delta events into it.

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace wfcrl {

/// Applies one stream event ({seq, type, payload}) to `doc`. A snapshot
/// replaces the document outright.
inline void apply_event(nlohmann::json& doc, const nlohmann::json& event) {
  const auto type = event.at("type").get<std::string>();
  const auto& p = event.at("payload");
  if (type == "snapshot") {
    doc = p.at("map");
    return;
  }
  if (type == "collapse") {
    doc.at("cells").at(p.at("cell").get<std::size_t>()) = {{"tile", p.at("tile")},
                                                           {"rotation", p.at("rotation")},
                                                           {"mirrored", p.at("mirrored")},
                                                           {"scale", p.at("scale")},
                                                           {"fallback", p.at("fallback")}};
    return;
  }
  if (type == "delta") {
    for (const auto& c : p.at("changed_cells"))
      doc.at("cells").at(c.at("cell").get<std::size_t>()) = {{"tile", c.at("new")},
                                                             {"rotation", c.at("rotation")},
                                                             {"mirrored", c.at("mirrored")},
                                                             {"scale", c.at("scale")},
                                                             {"fallback", false}};
    auto& objects = doc.at("objects");
    for (const auto& cell : p.at("objects_delta").at("removed")) {
      auto it = std::find_if(objects.begin(), objects.end(),
                             [&](const nlohmann::json& o) { return o.at("cell") == cell; });
      if (it != objects.end()) objects.erase(it);
    }
    for (const auto& o : p.at("objects_delta").at("added")) objects.push_back(o);
    doc["version"] = p.at("version");
    return;
  }
  throw std::invalid_argument("unknown event type '" + type + "'");
}

}  // namespace wfcrl
