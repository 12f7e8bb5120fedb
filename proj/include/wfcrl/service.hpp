#pragma once

// Map sessions behind HTTP: creation, narrative actions, and an ordered
// per-map event stream (snapshot, collapse, delta). Sessions live in memory
// and are persisted as the initial document plus an append-only edit log,
// replayed on start-up.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "wfcrl/engine.hpp"
#include "wfcrl/fixtures.hpp"
#include "wfcrl/map_document.hpp"
#include "wfcrl/narrative.hpp"
#include "wfcrl/rl/artifact.hpp"
#include "wfcrl/rl/trainer.hpp"

namespace wfcrl {

inline constexpr int kServiceSchemaVersion = 1;

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

struct MapSession {
  std::string id;
  std::string owner_token;
  std::string created_at;
  BiomeConfig config;  // layout already overridden when requested
  MapResult initial;
  MapResult current;
  std::vector<EditCommand> edit_log;

  std::vector<nlohmann::json> events;  // events[k] has seq k + 1
  std::size_t collapse_total = 0;      // collapse events this session will publish
  bool publishing = false;

  std::mutex mu;
  std::condition_variable cv;
};

struct ServiceOptions {
  std::filesystem::path data_dir = "wfcrl-data";
  int async_cells_above = 100;                // grids larger than this publish in the background
  std::chrono::microseconds publish_interval{0};  // pause between background collapse events
};

inline std::string random_hex(std::size_t chars) {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::ostringstream out;
  while (out.tellp() < static_cast<std::streamoff>(chars)) out << std::hex << std::setw(16) << std::setfill('0') << gen();
  return out.str().substr(0, chars);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

inline nlohmann::json make_event(long seq, const std::string& type, nlohmann::json payload) {
  return {{"seq", seq}, {"type", type}, {"payload", std::move(payload)}};
}

inline nlohmann::json collapse_payload(const MapResult& m, const TileSet& ts, const CollapseRecord& r) {
  const auto& c = m.grid.cells[static_cast<std::size_t>(r.cell)];
  return {{"cell", r.cell},
          {"tile", ts.tile(c.tile).id},
          {"rotation", c.transform.rotation},
          {"mirrored", c.transform.mirrored},
          {"scale", c.transform.scale},
          {"fallback", c.fallback}};
}

inline nlohmann::json delta_payload(const EditResult& r) {
  auto j = result_to_json(r);
  return {{"version", r.map_version},
          {"changed_cells", j["changed_cells"]},
          {"objects_delta", j["objects_delta"]},
          {"warnings", j["warnings"]}};
}

class MapService {
 public:
  MapService(std::map<Biome, BiomeConfig> configs, ServiceOptions options)
      : configs_(std::move(configs)), options_(std::move(options)) {
    std::filesystem::create_directories(maps_dir());
    std::filesystem::create_directories(policies_dir());
    restore();
  }

  ~MapService() { shutdown(); }
  MapService(const MapService&) = delete;
  MapService& operator=(const MapService&) = delete;

  /// Wakes streaming readers and waits for background publishers.
  void shutdown() {
    stopping_ = true;
    {
      std::lock_guard lock(sessions_mu_);
      for (auto& [_, s] : sessions_) s->cv.notify_all();
    }
    std::lock_guard lock(threads_mu_);
    for (auto& t : publishers_)
      if (t.joinable()) t.join();
    publishers_.clear();
  }

  [[nodiscard]] bool stopping() const { return stopping_; }
  [[nodiscard]] const ServiceOptions& options() const { return options_; }
  [[nodiscard]] std::filesystem::path maps_dir() const { return options_.data_dir / "maps"; }
  [[nodiscard]] std::filesystem::path policies_dir() const { return options_.data_dir / "policies"; }

  ServiceResponse create_map(const nlohmann::json& req) {
    using nlohmann::json;
    if (!req.is_object()) return error(422, "request body must be a JSON object");
    auto biome = parse_biome(req.value("biome", ""));
    if (!biome) return error(422, "biome must be one of city, desert, forest");
    auto cfg_it = configs_.find(*biome);
    if (cfg_it == configs_.end()) return error(422, "no tileset loaded for this biome");
    BiomeConfig config = cfg_it->second;
    if (req.contains("layout") && !req["layout"].is_null()) {
      auto layout = req["layout"].is_string() ? parse_layout(req["layout"].get<std::string>()) : std::nullopt;
      if (!layout) return error(422, "layout must be continuous or sparse");
      config.layout = *layout;
    }
    const auto& w = req.contains("width") ? req["width"] : json();
    const auto& h = req.contains("height") ? req["height"] : json();
    if (!w.is_number_integer() || !h.is_number_integer()) return error(422, "width and height must be integers");
    const long width = w.get<long>(), height = h.get<long>();
    if (width < 1 || height < 1 || width > kMaxGridSide || height > kMaxGridSide)
      return error(422, "width and height must lie in [1, 15]; maps are limited to 15x15");
    std::uint64_t seed;
    if (req.contains("seed") && !req["seed"].is_null()) {
      if (!req["seed"].is_number_unsigned() && !(req["seed"].is_number_integer() && req["seed"].get<long long>() >= 0))
        return error(422, "seed must be a non-negative integer");
      seed = req["seed"].get<std::uint64_t>();
    } else {
      seed = std::random_device{}() | (static_cast<std::uint64_t>(std::random_device{}()) << 31);
    }

    std::optional<rl::PolicyParams> policy;
    std::string policy_id;
    if (req.contains("policy_id") && !req["policy_id"].is_null()) {
      if (!req["policy_id"].is_string()) return error(422, "policy_id must be a string");
      policy_id = req["policy_id"].get<std::string>();
      if (policy_id.find('/') != std::string::npos || policy_id.find("..") != std::string::npos)
        return error(422, "invalid policy_id");
      const auto path = policies_dir() / (policy_id + ".wfcp");
      if (!std::filesystem::exists(path)) return error(404, "unknown policy '" + policy_id + "'");
      try {
        policy = rl::load_policy(path.string());
      } catch (const std::exception& e) {
        return error(500, std::string("policy could not be loaded: ") + e.what());
      }
      if (policy->meta.biome != *biome) return error(422, "policy '" + policy_id + "' was trained for another biome");
      if (width > policy->meta.width || height > policy->meta.height)
        return error(422, "policy '" + policy_id + "' was trained for smaller grids");
    }

    auto s = std::make_shared<MapSession>();
    s->owner_token = random_hex(32);
    s->created_at = utc_timestamp();
    s->config = config;
    s->initial = rl::generate(config, static_cast<int>(width), static_cast<int>(height), seed,
                              policy ? &*policy : nullptr);
    s->current = s->initial;
    {
      std::lock_guard lock(sessions_mu_);
      do s->id = "m" + random_hex(12);
      while (sessions_.count(s->id));
      sessions_[s->id] = s;
    }
    persist_session(*s, policy_id);

    const auto& order = s->initial.grid.collapse_order;
    s->collapse_total = order.size();
    const bool background = static_cast<int>(width * height) > options_.async_cells_above;
    if (!background) {
      std::lock_guard lock(s->mu);
      for (const auto& r : order) push_event(*s, "collapse", collapse_payload(s->initial, config.tileset, r));
    } else {
      {
        std::lock_guard lock(s->mu);
        s->publishing = true;
      }
      std::lock_guard lock(threads_mu_);
      publishers_.emplace_back([this, s] { publish_collapses(s); });
    }

    json body{{"schema_version", kServiceSchemaVersion},
              {"map_id", s->id},
              {"owner_token", s->owner_token},
              {"seed", seed},
              {"map", map_to_json(s->initial, config.tileset)}};
    return {200, body};
  }

  ServiceResponse get_map(const std::string& id) {
    auto s = find(id);
    if (!s) return error(404, "unknown map '" + id + "'");
    std::lock_guard lock(s->mu);
    return {200, map_to_json(s->current, s->config.tileset)};
  }

  ServiceResponse apply_action(const std::string& id, const nlohmann::json& body, const std::string& token) {
    auto s = find(id);
    if (!s) return error(404, "unknown map '" + id + "'");
    if (token != s->owner_token) return error(403, "owner token does not match");
    EditCommand cmd;
    try {
      cmd = command_from_json(body);
    } catch (const EditParseError& e) {
      return error(422, e.what());
    }
    std::unique_lock lock(s->mu);
    s->cv.wait(lock, [&] { return !s->publishing || stopping_; });
    if (cmd.base_version && *cmd.base_version != s->current.version) {
      auto r = error(409, "map is at version " + std::to_string(s->current.version));
      r.body["version"] = s->current.version;
      return r;
    }
    EditResult result = apply_edit(s->current, cmd, s->config);
    if (result.accepted) {
      s->edit_log.push_back(cmd);
      append_edit(*s, cmd);
      push_event(*s, "delta", delta_payload(result));
    }
    auto j = result_to_json(result);
    j["schema_version"] = kServiceSchemaVersion;
    return {200, j};
  }

  ServiceResponse list_policies() const {
    nlohmann::json list = nlohmann::json::array();
    std::vector<std::filesystem::path> files;
    if (std::filesystem::exists(policies_dir()))
      for (const auto& e : std::filesystem::directory_iterator(policies_dir()))
        if (e.path().extension() == ".wfcp") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        const auto p = rl::load_policy(f.string());
        list.push_back({{"id", f.stem().string()},
                        {"biome", std::string(to_string(p.meta.biome))},
                        {"layout", std::string(to_string(p.meta.layout))},
                        {"width", p.meta.width},
                        {"height", p.meta.height},
                        {"episodes", p.meta.episodes},
                        {"seed", p.meta.seed}});
      } catch (const std::exception& e) {
        list.push_back({{"id", f.stem().string()}, {"error", e.what()}});
      }
    }
    return {200, {{"schema_version", kServiceSchemaVersion}, {"policies", list}}};
  }

  ServiceResponse health() const {
    std::lock_guard lock(sessions_mu_);
    return {200, {{"schema_version", kServiceSchemaVersion}, {"status", "ok"}, {"maps", sessions_.size()}}};
  }

  std::shared_ptr<MapSession> find(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  /// Snapshot of everything published so far. Its seq is that of the last
  /// event it already includes, so the next event to read is seq + 1.
  nlohmann::json snapshot(MapSession& s) {
    std::lock_guard lock(s.mu);
    return snapshot_locked(s);
  }

  /// Events with seq > after. With `wait`, blocks up to `timeout` for at
  /// least one to appear.
  std::vector<nlohmann::json> events_after(MapSession& s, long after, bool wait,
                                           std::chrono::milliseconds timeout = std::chrono::milliseconds(250)) {
    std::unique_lock lock(s.mu);
    if (wait)
      s.cv.wait_for(lock, timeout, [&] { return static_cast<long>(s.events.size()) > after || stopping_.load(); });
    std::vector<nlohmann::json> out;
    for (auto k = static_cast<std::size_t>(std::max(0L, after)); k < s.events.size(); ++k) out.push_back(s.events[k]);
    return out;
  }

  /// Whether the session will still publish collapse events.
  bool publishing(MapSession& s) {
    std::lock_guard lock(s.mu);
    return s.publishing;
  }

 private:
  static ServiceResponse error(int status, const std::string& message) {
    return {status, {{"schema_version", kServiceSchemaVersion}, {"error", message}}};
  }

  void push_event(MapSession& s, const std::string& type, nlohmann::json payload) {
    s.events.push_back(make_event(static_cast<long>(s.events.size()) + 1, type, std::move(payload)));
    s.cv.notify_all();
  }

  nlohmann::json snapshot_locked(MapSession& s) const {
    const long seq = static_cast<long>(s.events.size());
    nlohmann::json doc;
    if (s.publishing || s.events.size() < s.collapse_total) {
      // Mid-generation: only the published collapses are visible.
      doc = map_to_json(s.initial, s.config.tileset);
      std::vector<char> seen(s.initial.grid.cells.size(), 0);
      for (std::size_t k = 0; k < s.events.size() && k < s.collapse_total; ++k)
        seen[static_cast<std::size_t>(s.initial.grid.collapse_order[k].cell)] = 1;
      for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) doc["cells"][i] = nullptr;
    } else {
      doc = map_to_json(s.current, s.config.tileset);
    }
    return make_event(seq, "snapshot", {{"map", doc}});
  }

  void publish_collapses(std::shared_ptr<MapSession> s) {
    for (std::size_t k = 0; k < s->initial.grid.collapse_order.size(); ++k) {
      if (stopping_) break;
      if (options_.publish_interval.count() > 0) std::this_thread::sleep_for(options_.publish_interval);
      std::lock_guard lock(s->mu);
      push_event(*s, "collapse", collapse_payload(s->initial, s->config.tileset, s->initial.grid.collapse_order[k]));
    }
    std::lock_guard lock(s->mu);
    // A shutdown mid-publication still releases writers; the remaining
    // events are regenerated from the log on the next start.
    for (std::size_t k = s->events.size(); k < s->collapse_total; ++k)
      push_event(*s, "collapse", collapse_payload(s->initial, s->config.tileset, s->initial.grid.collapse_order[k]));
    s->publishing = false;
    s->cv.notify_all();
  }

  void persist_session(const MapSession& s, const std::string& policy_id) {
    nlohmann::json j{{"schema_version", kServiceSchemaVersion},
                     {"map_id", s.id},
                     {"owner_token", s.owner_token},
                     {"created_at", s.created_at},
                     {"biome", std::string(to_string(s.config.biome))},
                     {"layout", std::string(to_string(s.config.layout))},
                     {"policy_id", policy_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(policy_id)},
                     {"initial", map_to_json(s.initial, s.config.tileset)}};
    std::ofstream(maps_dir() / (s.id + ".json")) << j.dump(2) << '\n';
    std::ofstream(maps_dir() / (s.id + ".edits.jsonl"), std::ios::app);
  }

  void append_edit(const MapSession& s, const EditCommand& cmd) {
    std::ofstream f(maps_dir() / (s.id + ".edits.jsonl"), std::ios::app);
    f << command_to_json(cmd).dump() << '\n';
  }

  void restore() {
    for (const auto& e : std::filesystem::directory_iterator(maps_dir())) {
      const auto& path = e.path();
      if (path.extension() != ".json") continue;
      const auto j = nlohmann::json::parse(read_text_file(path));
      auto s = std::make_shared<MapSession>();
      s->id = j.at("map_id").get<std::string>();
      s->owner_token = j.at("owner_token").get<std::string>();
      s->created_at = j.value("created_at", "");
      const auto biome = parse_biome(j.at("biome").get<std::string>());
      const auto layout = parse_layout(j.at("layout").get<std::string>());
      if (!biome || !layout || !configs_.count(*biome))
        throw std::runtime_error(path.string() + ": unknown biome or layout");
      s->config = configs_.at(*biome);
      s->config.layout = *layout;
      s->initial = map_from_json(j.at("initial"), s->config.tileset);
      s->current = s->initial;
      for (const auto& r : s->initial.grid.collapse_order)
        push_event(*s, "collapse", collapse_payload(s->initial, s->config.tileset, r));
      s->collapse_total = s->events.size();
      std::ifstream log(maps_dir() / (s->id + ".edits.jsonl"));
      std::string line;
      while (std::getline(log, line)) {
        if (line.empty()) continue;
        const auto cmd = command_from_json(nlohmann::json::parse(line));
        const auto r = apply_edit(s->current, cmd, s->config);
        if (!r.accepted) throw std::runtime_error(path.string() + ": edit log does not replay: " + r.reason);
        s->edit_log.push_back(cmd);
        push_event(*s, "delta", delta_payload(r));
      }
      sessions_[s->id] = s;
    }
  }

  std::map<Biome, BiomeConfig> configs_;
  ServiceOptions options_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<MapSession>> sessions_;
  std::mutex threads_mu_;
  std::vector<std::thread> publishers_;
  std::atomic<bool> stopping_{false};
};

inline std::string sse_frame(const nlohmann::json& event) {
  return "id: " + std::to_string(event.at("seq").get<long>()) + "\nevent: " + event.at("type").get<std::string>() +
         "\ndata: " + event.dump() + "\n\n";
}

/// Parses "data:" lines of a server-sent event stream into event objects.
inline std::vector<nlohmann::json> parse_sse(std::string_view text) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.rfind("data: ", 0) == 0) out.push_back(nlohmann::json::parse(line.substr(6)));
    pos = end + 1;
  }
  return out;
}

inline void send_json(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

/// Installs the HTTP routes on `server`.
///   POST /maps                 create (body: biome, width, height, layout?, seed?, policy_id?)
///   GET  /maps/{id}            current document
///   POST /maps/{id}/actions    edit command, owner token in X-Owner-Token
///   GET  /maps/{id}/events     event stream; ?after=N resumes, ?follow=0 ends after the backlog
///   GET  /policies, GET /healthz
inline void mount_routes(httplib::Server& server, MapService& svc) {
  auto parse_body = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
    try {
      return nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
    } catch (const nlohmann::json::parse_error&) {
      return std::nullopt;
    }
  };
  server.Post("/maps", [&svc, parse_body](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    if (!body) return send_json(res, {400, {{"schema_version", kServiceSchemaVersion}, {"error", "malformed JSON"}}});
    send_json(res, svc.create_map(*body));
  });
  server.Get(R"(/maps/([A-Za-z0-9]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.get_map(req.matches[1]));
  });
  server.Post(R"(/maps/([A-Za-z0-9]+)/actions)", [&svc, parse_body](const httplib::Request& req,
                                                                    httplib::Response& res) {
    auto body = parse_body(req);
    if (!body) return send_json(res, {400, {{"schema_version", kServiceSchemaVersion}, {"error", "malformed JSON"}}});
    std::string token = req.get_header_value("X-Owner-Token");
    if (token.empty() && body->is_object() && body->contains("owner_token") && (*body)["owner_token"].is_string())
      token = (*body)["owner_token"].get<std::string>();
    send_json(res, svc.apply_action(req.matches[1], *body, token));
  });
  server.Get(R"(/maps/([A-Za-z0-9]+)/events)", [&svc](const httplib::Request& req, httplib::Response& res) {
    auto session = svc.find(req.matches[1]);
    if (!session)
      return send_json(res, {404, {{"schema_version", kServiceSchemaVersion}, {"error", "unknown map"}}});
    std::optional<long> after;
    try {
      if (req.has_param("after"))
        after = std::stol(req.get_param_value("after"));
      else if (req.has_header("Last-Event-ID"))
        after = std::stol(req.get_header_value("Last-Event-ID"));
    } catch (const std::exception&) {
      return send_json(res, {400, {{"schema_version", kServiceSchemaVersion}, {"error", "after must be an integer"}}});
    }
    const bool follow = req.get_param_value("follow") != "0";
    res.set_header("Cache-Control", "no-cache");
    auto cursor = std::make_shared<long>(after.value_or(-1));
    res.set_chunked_content_provider(
        "text/event-stream", [&svc, session, cursor, follow](std::size_t, httplib::DataSink& sink) {
          if (*cursor < 0) {
            const auto snap = svc.snapshot(*session);
            *cursor = snap.at("seq").get<long>();
            const auto frame = sse_frame(snap);
            if (!sink.write(frame.data(), frame.size())) return false;
          }
          const bool more_expected = follow || svc.publishing(*session);
          const auto events = svc.events_after(*session, *cursor, more_expected);
          for (const auto& e : events) {
            const auto frame = sse_frame(e);
            if (!sink.write(frame.data(), frame.size())) return false;
            *cursor = e.at("seq").get<long>();
          }
          if (svc.stopping() || (!follow && events.empty() && !svc.publishing(*session))) sink.done();
          return true;
        });
  });
  server.Get("/policies", [&svc](const httplib::Request&, httplib::Response& res) { send_json(res, svc.list_policies()); });
  server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) { send_json(res, svc.health()); });
}

}  // namespace wfcrl
