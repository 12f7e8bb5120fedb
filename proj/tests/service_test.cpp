#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "live_server.hpp"
#include "wfcrl/event_replay.hpp"
#include "wfcrl/rl/artifact.hpp"
#include "wfcrl/rl/observation.hpp"

using namespace wfcrl;
using nlohmann::json;
using wfcrl::test::fresh_dir;
using wfcrl::test::LiveServer;

namespace {

ServiceOptions options_in(const std::filesystem::path& dir) {
  ServiceOptions o;
  o.data_dir = dir;
  return o;
}

json city(int w, int h, std::uint64_t seed) { return {{"biome", "city"}, {"width", w}, {"height", h}, {"seed", seed}}; }

// Finds a cell whose tile has the given walkability in a map document.
int find_cell(const json& doc, const TileSet& ts, bool path) {
  for (std::size_t i = 0; i < doc.at("cells").size(); ++i)
    if (ts.is_path(ts.index_of(doc["cells"][i]["tile"].get<std::string>())) == path) return static_cast<int>(i);
  return -1;
}

// Issues random edits until `count` have been accepted.
int accepted_edits(LiveServer& srv, const std::string& id, const std::string& token, int count, std::uint64_t seed,
                   int cells) {
  Rng rng(seed);
  int accepted = 0, attempts = 0;
  static const char* ops[] = {"clear_path", "block_path", "place_object", "remove_object"};
  static const char* kinds[] = {"trap", "treasure_chest", "key", "locked_door"};
  while (accepted < count && attempts++ < 500) {
    json cmd{{"op", ops[rng.below(4)]}, {"cells", {static_cast<int>(rng.below(static_cast<std::uint64_t>(cells)))}}};
    if (cmd["op"] == "place_object") cmd["object"] = {{"kind", kinds[rng.below(4)]}, {"label", "x"}};
    const auto r = srv.post("/maps/" + id + "/actions", cmd, token);
    EXPECT_EQ(r.status, 200);
    if (r.json().at("accepted").get<bool>()) ++accepted;
  }
  return accepted;
}

}  // namespace

TEST(Service, CreateThenGetIsByteIdentical) {
  const auto dir = fresh_dir("svc_create");
  LiveServer srv(options_in(dir));
  const auto r = srv.post("/maps", city(10, 10, 42));
  ASSERT_EQ(r.status, 200);
  const auto body = r.json();
  EXPECT_EQ(body.at("schema_version"), 1);
  EXPECT_EQ(body.at("seed"), 42);
  EXPECT_EQ(body.at("map").at("cells").size(), 100u);
  const auto id = body.at("map_id").get<std::string>();
  const auto got = srv.get("/maps/" + id);
  ASSERT_EQ(got.status, 200);
  EXPECT_EQ(got.body, body.at("map").dump());
  std::filesystem::remove_all(dir);
}

TEST(Service, ValidationErrors) {
  const auto dir = fresh_dir("svc_validate");
  LiveServer srv(options_in(dir));
  const auto wide = srv.post("/maps", city(16, 10, 1));
  EXPECT_EQ(wide.status, 422);
  EXPECT_NE(wide.json().at("error").get<std::string>().find("15"), std::string::npos);
  EXPECT_EQ(srv.post("/maps", {{"biome", "swamp"}, {"width", 5}, {"height", 5}}).status, 422);
  EXPECT_EQ(srv.post("/maps", {{"biome", "city"}, {"width", "5"}, {"height", 5}}).status, 422);
  EXPECT_EQ(srv.post("/maps", {{"biome", "city"}, {"width", 5}, {"height", 5}, {"layout", "dense"}}).status, 422);
  auto c = srv.client();
  auto raw = c.Post("/maps", "{nope", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 400);
  auto unknown = json(city(5, 5, 1));
  unknown["policy_id"] = "nothing_here";
  EXPECT_EQ(srv.post("/maps", unknown).status, 404);
  EXPECT_EQ(srv.get("/maps/mdoesnotexist").status, 404);
  EXPECT_EQ(srv.get("/maps/mdoesnotexist/events").status, 404);
  std::filesystem::remove_all(dir);
}

TEST(Service, OmittedSeedIsReturnedAndReplayable) {
  const auto dir = fresh_dir("svc_seed");
  LiveServer srv(options_in(dir));
  const auto a = srv.post("/maps", {{"biome", "forest"}, {"width", 6}, {"height", 6}}).json();
  ASSERT_TRUE(a.at("seed").is_number_unsigned());
  const auto b = srv.post("/maps", {{"biome", "forest"}, {"width", 6}, {"height", 6}, {"seed", a.at("seed")}}).json();
  EXPECT_EQ(a.at("map").at("cells"), b.at("map").at("cells"));
  std::filesystem::remove_all(dir);
}

TEST(Service, LayoutOverride) {
  const auto dir = fresh_dir("svc_layout");
  LiveServer srv(options_in(dir));
  auto req = city(5, 5, 3);
  req["layout"] = "sparse";
  EXPECT_EQ(srv.post("/maps", req).json().at("map").at("layout"), "sparse");
  std::filesystem::remove_all(dir);
}

TEST(Service, OwnershipAndVersions) {
  const auto dir = fresh_dir("svc_owner");
  LiveServer srv(options_in(dir));
  const auto biomes = load_all_biomes();
  const auto& ts = biomes.at(Biome::City).tileset;
  const auto created = srv.post("/maps", city(8, 8, 5)).json();
  const auto id = created.at("map_id").get<std::string>();
  const auto token = created.at("owner_token").get<std::string>();
  const int road = find_cell(created.at("map"), ts, true);
  ASSERT_GE(road, 0);
  const json chest{{"op", "place_object"}, {"cells", {road}}, {"object", {{"kind", "treasure_chest"}}}};

  EXPECT_EQ(srv.post("/maps/" + id + "/actions", chest, "wrong").status, 403);
  EXPECT_EQ(srv.post("/maps/" + id + "/actions", chest).status, 403);
  EXPECT_EQ(srv.post("/maps/" + id + "/actions", json{{"op", "dig"}, {"cells", {1}}}, token).status, 422);

  auto ok = srv.post("/maps/" + id + "/actions", chest, token);
  ASSERT_EQ(ok.status, 200);
  EXPECT_TRUE(ok.json().at("accepted").get<bool>());
  EXPECT_EQ(ok.json().at("map_version"), 1);

  // Token in the body is accepted too.
  auto in_body = json{{"op", "remove_object"}, {"cells", {road}}, {"owner_token", token}, {"base_version", 1}};
  EXPECT_EQ(srv.post("/maps/" + id + "/actions", in_body).json().at("map_version"), 2);

  auto stale = chest;
  stale["base_version"] = 1;
  const auto conflict = srv.post("/maps/" + id + "/actions", stale, token);
  EXPECT_EQ(conflict.status, 409);
  EXPECT_EQ(conflict.json().at("version"), 2);

  ASSERT_TRUE(srv.post("/maps/" + id + "/actions", chest, token).json().at("accepted").get<bool>());
  EXPECT_EQ(srv.get("/maps/" + id).json().at("version"), 3);
  std::filesystem::remove_all(dir);
}

TEST(Service, RejectedEditPublishesNothing) {
  const auto dir = fresh_dir("svc_reject");
  LiveServer srv(options_in(dir));
  const auto biomes = load_all_biomes();
  const auto& ts = biomes.at(Biome::City).tileset;
  const auto created = srv.post("/maps", city(8, 8, 9)).json();
  const auto id = created.at("map_id").get<std::string>();
  const int blocked = find_cell(created.at("map"), ts, false);
  ASSERT_GE(blocked, 0);
  const auto before = srv.backlog(id);
  const json door{{"op", "place_object"}, {"cells", {blocked}}, {"object", {{"kind", "locked_door"}}}};
  const auto r = srv.post("/maps/" + id + "/actions", door, created.at("owner_token").get<std::string>());
  ASSERT_EQ(r.status, 200);
  EXPECT_FALSE(r.json().at("accepted").get<bool>());
  EXPECT_TRUE(r.json().contains("reason"));
  EXPECT_EQ(srv.backlog(id), before);
  EXPECT_EQ(srv.get("/maps/" + id).json().at("version"), 0);
  std::filesystem::remove_all(dir);
}

TEST(Service, StreamStartsWithSnapshotAndResumes) {
  const auto dir = fresh_dir("svc_stream");
  LiveServer srv(options_in(dir));
  const auto created = srv.post("/maps", city(6, 6, 1)).json();
  const auto id = created.at("map_id").get<std::string>();
  ASSERT_EQ(accepted_edits(srv, id, created.at("owner_token"), 3, 11, 36), 3);

  const auto all = srv.backlog(id, 0);
  ASSERT_EQ(all.size(), 39u);
  for (std::size_t k = 0; k < all.size(); ++k) {
    EXPECT_EQ(all[k].at("seq"), static_cast<long>(k) + 1);
    EXPECT_EQ(all[k].at("type"), k < 36 ? "collapse" : "delta");
  }
  const auto tail = srv.backlog(id, 20);
  ASSERT_FALSE(tail.empty());
  EXPECT_EQ(tail.front().at("seq"), 21);

  // Last-Event-ID works like ?after=.
  auto c = srv.client();
  auto r = c.Get("/maps/" + id + "/events?follow=0", httplib::Headers{{"Last-Event-ID", "37"}});
  ASSERT_TRUE(r);
  const auto resumed = parse_sse(r->body);
  ASSERT_EQ(resumed.size(), 2u);
  EXPECT_EQ(resumed.front().at("seq"), 38);

  const auto fresh = srv.backlog(id);
  ASSERT_EQ(fresh.size(), 1u);
  EXPECT_EQ(fresh[0].at("type"), "snapshot");
  EXPECT_EQ(fresh[0].at("seq"), 39);
  EXPECT_EQ(fresh[0].at("payload").at("map").dump(), srv.get("/maps/" + id).body);
  EXPECT_NE(r->get_header_value("Content-Type").find("text/event-stream"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Service, MidGenerationSubscriberCoversEachCellOnce) {
  const auto dir = fresh_dir("svc_midgen");
  auto opt = options_in(dir);
  opt.publish_interval = std::chrono::milliseconds(3);
  LiveServer srv(opt);
  const auto created = srv.post("/maps", city(15, 15, 8)).json();
  const auto id = created.at("map_id").get<std::string>();
  std::this_thread::sleep_for(std::chrono::milliseconds(60));
  const auto events = srv.backlog(id);
  ASSERT_FALSE(events.empty());
  ASSERT_EQ(events[0].at("type"), "snapshot");
  std::multiset<int> covered;
  const auto& cells = events[0].at("payload").at("map").at("cells");
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!cells[i].is_null()) covered.insert(static_cast<int>(i));
  const auto in_snapshot = covered.size();
  EXPECT_GT(in_snapshot, 0u);
  EXPECT_LT(in_snapshot, 225u);
  EXPECT_EQ(events[0].at("seq").get<std::size_t>(), in_snapshot);
  for (std::size_t k = 1; k < events.size(); ++k) {
    EXPECT_EQ(events[k].at("seq").get<std::size_t>(), in_snapshot + k);
    covered.insert(events[k].at("payload").at("cell").get<int>());
  }
  EXPECT_EQ(covered.size(), 225u);
  EXPECT_EQ(std::set<int>(covered.begin(), covered.end()).size(), 225u);

  // Folding the stream yields the generated document.
  json doc;
  for (const auto& e : events) apply_event(doc, e);
  EXPECT_EQ(doc.dump(), created.at("map").dump());
  std::filesystem::remove_all(dir);
}

TEST(Service, EditsWaitForBackgroundPublication) {
  const auto dir = fresh_dir("svc_wait");
  auto opt = options_in(dir);
  opt.publish_interval = std::chrono::milliseconds(1);
  LiveServer srv(opt);
  const auto created = srv.post("/maps", city(12, 12, 4)).json();
  const auto id = created.at("map_id").get<std::string>();
  ASSERT_EQ(accepted_edits(srv, id, created.at("owner_token"), 1, 2, 144), 1);
  const auto all = srv.backlog(id, 0);
  ASSERT_EQ(all.size(), 145u);
  EXPECT_EQ(all.back().at("type"), "delta");
  std::filesystem::remove_all(dir);
}

TEST(Service, LiveSubscribersAgreeAndReplayMatches) {
  const auto dir = fresh_dir("svc_live");
  LiveServer srv(options_in(dir));
  const auto created = srv.post("/maps", city(10, 10, 77)).json();
  const auto id = created.at("map_id").get<std::string>();

  std::vector<json> seen[2];
  std::atomic<int> ready{0};
  std::vector<std::thread> subs;
  for (int k = 0; k < 2; ++k)
    subs.emplace_back([&, k] {
      srv.follow(id, [&, k](const json& e) {
        seen[k].push_back(e);
        if (e.at("type") == "snapshot") ++ready;
        return seen[k].size() < 21;
      });
    });
  while (ready < 2) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  ASSERT_EQ(accepted_edits(srv, id, created.at("owner_token"), 20, 5, 100), 20);
  for (auto& t : subs) t.join();

  EXPECT_EQ(seen[0], seen[1]);
  ASSERT_EQ(seen[0].size(), 21u);
  json doc;
  for (const auto& e : seen[0]) apply_event(doc, e);
  const auto current = srv.get("/maps/" + id);
  EXPECT_EQ(doc.dump(), current.body);
  EXPECT_EQ(current.json().at("version"), 20);
  std::filesystem::remove_all(dir);
}

TEST(Service, RestartReplaysPersistedLogs) {
  const auto dir = fresh_dir("svc_restart");
  std::string id, before_doc;
  std::vector<json> before_events;
  {
    LiveServer srv(options_in(dir));
    const auto created = srv.post("/maps", {{"biome", "desert"}, {"width", 9}, {"height", 9}, {"seed", 3}}).json();
    id = created.at("map_id").get<std::string>();
    ASSERT_EQ(accepted_edits(srv, id, created.at("owner_token"), 8, 21, 81), 8);
    before_doc = srv.get("/maps/" + id).body;
    before_events = srv.backlog(id, 0);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "maps" / (id + ".json")));
  EXPECT_TRUE(std::filesystem::exists(dir / "maps" / (id + ".edits.jsonl")));
  LiveServer again(options_in(dir));
  EXPECT_EQ(again.get("/maps/" + id).body, before_doc);
  EXPECT_EQ(again.backlog(id, 0), before_events);
  EXPECT_EQ(again.get("/healthz").json().at("maps"), 1);
  std::filesystem::remove_all(dir);
}

TEST(Service, PoliciesAndHealth) {
  const auto dir = fresh_dir("svc_policies");
  LiveServer srv(options_in(dir));
  const auto health = srv.get("/healthz");
  EXPECT_EQ(health.status, 200);
  EXPECT_EQ(health.json().at("status"), "ok");
  EXPECT_EQ(srv.get("/policies").json().at("policies").size(), 0u);

  const auto biomes = load_all_biomes();
  const auto& cfg = biomes.at(Biome::Forest);
  auto p = rl::PolicyParams::initial(rl::observation_size(6, 6), 2);
  p.meta = {cfg.biome, cfg.layout, 6, 6, 10, 2};
  rl::save_policy((srv.service().policies_dir() / "forest_small.wfcp").string(), p);
  const auto list = srv.get("/policies").json().at("policies");
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].at("id"), "forest_small");
  EXPECT_EQ(list[0].at("biome"), "forest");
  EXPECT_EQ(list[0].at("width"), 6);

  json req{{"biome", "forest"}, {"width", 6}, {"height", 5}, {"seed", 1}, {"policy_id", "forest_small"}};
  EXPECT_EQ(srv.post("/maps", req).status, 200);
  req["width"] = 7;
  EXPECT_EQ(srv.post("/maps", req).status, 422);
  req["width"] = 6;
  req["biome"] = "city";
  EXPECT_EQ(srv.post("/maps", req).status, 422);
  std::filesystem::remove_all(dir);
}

TEST(Sse, FrameRoundTrip) {
  const json e{{"seq", 4}, {"type", "delta"}, {"payload", {{"version", 2}}}};
  const auto frame = sse_frame(e);
  EXPECT_EQ(frame.rfind("id: 4\nevent: delta\ndata: ", 0), 0u);
  EXPECT_EQ(parse_sse(frame + frame), (std::vector<json>{e, e}));
}
