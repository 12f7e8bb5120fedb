#include <gtest/gtest.h>

#include <deque>

#include "test_support.hpp"
#include "wfcrl/engine.hpp"
#include "wfcrl/map_document.hpp"
#include "wfcrl/metrics.hpp"
#include "wfcrl/narrative.hpp"

using namespace wfcrl;
using wfcrl::test::bundled;
using wfcrl::test::map_from_rows;

namespace {

bool walkable(const MapResult& m, const TileSet& ts, int i) {
  return ts.tile(m.grid.cells[static_cast<std::size_t>(i)].tile).kind == TileKind::Path;
}

// Breadth-first reachability between two cells over path tiles.
bool connected(const MapResult& m, const TileSet& ts, int a, int b) {
  const int w = m.grid.width, n = static_cast<int>(m.grid.cells.size());
  if (!walkable(m, ts, a) || !walkable(m, ts, b)) return false;
  std::vector<bool> seen(static_cast<std::size_t>(n));
  std::deque<int> q{a};
  seen[static_cast<std::size_t>(a)] = true;
  while (!q.empty()) {
    const int c = q.front();
    q.pop_front();
    if (c == b) return true;
    const int x = c % w;
    for (int nb : {c - w, c + w, x > 0 ? c - 1 : -1, x + 1 < w ? c + 1 : -1}) {
      if (nb < 0 || nb >= n || seen[static_cast<std::size_t>(nb)] || !walkable(m, ts, nb)) continue;
      seen[static_cast<std::size_t>(nb)] = true;
      q.push_back(nb);
    }
  }
  return false;
}

int components(const MapResult& m, const TileSet& ts) {
  const int n = static_cast<int>(m.grid.cells.size());
  std::vector<int> rep;
  for (int i = 0; i < n; ++i) {
    if (!walkable(m, ts, i)) continue;
    bool joined = false;
    for (int r : rep)
      if (connected(m, ts, r, i)) joined = true;
    if (!joined) rep.push_back(i);
  }
  return static_cast<int>(rep.size());
}

std::string bytes(const MapResult& m, const TileSet& ts) { return canonical_dump(map_to_json(m, ts)); }

EditCommand cmd(EditOp op, std::vector<int> cells) {
  EditCommand c;
  c.op = op;
  c.cells = std::move(cells);
  c.actor = "dm";
  return c;
}

EditCommand place(ObjectKind kind, int cell, std::string label = {}) {
  auto c = cmd(EditOp::PlaceObject, {cell});
  c.object = PlacedObject{kind, 0, std::move(label), 0};
  return c;
}

}  // namespace

TEST(ClearPath, OpensRouteBetweenRoads) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=B=", "B=B"});
  EXPECT_FALSE(connected(m, cfg.tileset, 3, 5));
  const auto r = clear_path(m, {4}, cfg);
  ASSERT_TRUE(r.accepted) << r.reason;
  EXPECT_TRUE(cfg.tileset.is_path(m.grid.cells[4].tile));
  EXPECT_TRUE(connected(m, cfg.tileset, 3, 5));
  EXPECT_EQ(count_adjacency_violations(m.grid, cfg.tileset), 0);
  EXPECT_EQ(r.map_version, 1);
  ASSERT_EQ(r.changed_cells.size(), 1u);
  EXPECT_EQ(r.changed_cells[0].old_tile, "building");
}

TEST(ClearPath, AlreadyPathIsNoChange) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=B=", "B=B"});
  const auto before = m.grid;
  const auto r = clear_path(m, {1}, cfg);
  EXPECT_TRUE(r.accepted);
  EXPECT_TRUE(r.changed_cells.empty());
  EXPECT_EQ(m.grid, before);
}

TEST(ClearPath, OutOfBoundsRejected) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=B=", "B=B"});
  EXPECT_FALSE(clear_path(m, {9}, cfg).accepted);
  EXPECT_FALSE(clear_path(m, {-1}, cfg).accepted);
  EXPECT_EQ(m.version, 0);
}

TEST(ClearPath, IncompleteMapRejected) {
  const auto& cfg = bundled(Biome::City);
  MapResult m;
  m.grid = init_grid(cfg, 3, 3, 1);
  EXPECT_FALSE(clear_path(m, {0}, cfg).accepted);
}

TEST(BlockPath, JunctionCaveInWarns) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=#=", "B=B"});
  ASSERT_EQ(components(m, cfg.tileset), 1);
  const auto r = block_path(m, {4}, cfg);
  ASSERT_TRUE(r.accepted) << r.reason;
  EXPECT_EQ(components(m, cfg.tileset), 4);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(BlockPath, AlreadyImpassableIsNoChange) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=B=", "B=B"});
  const auto r = block_path(m, {0}, cfg);
  EXPECT_TRUE(r.accepted);
  EXPECT_TRUE(r.changed_cells.empty());
  EXPECT_TRUE(r.warnings.empty());
}

TEST(BlockPath, ObjectCellRejected) {
  const auto& cfg = bundled(Biome::City);
  auto m = map_from_rows(cfg, {"B=B", "=#=", "B=B"});
  ASSERT_TRUE(apply_edit(m, place(ObjectKind::Key, 4), cfg).accepted);
  const auto snap = bytes(m, cfg.tileset);
  const auto r = block_path(m, {4}, cfg);
  EXPECT_FALSE(r.accepted);
  EXPECT_FALSE(r.reason.empty());
  EXPECT_EQ(bytes(m, cfg.tileset), snap);
}

TEST(BlockPath, WarningIffComponentsIncrease) {
  int warned = 0, quiet = 0;
  for (Biome b : {Biome::City, Biome::Desert, Biome::Forest}) {
    const auto& cfg = bundled(b);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto m = generate(cfg, 8, 8, seed);
      Rng rng(seed);
      for (int k = 0; k < 5; ++k) {
        const int cell = static_cast<int>(rng.below(64));
        const int before = components(m, cfg.tileset);
        const auto r = block_path(m, {cell}, cfg);
        if (!r.accepted) continue;
        const int after = components(m, cfg.tileset);
        EXPECT_EQ(!r.warnings.empty(), after > before);
        (r.warnings.empty() ? quiet : warned) += 1;
      }
    }
  }
  EXPECT_GT(warned, 0);
  EXPECT_GT(quiet, 0);
}

TEST(Objects, ChestOnClearingAccepted) {
  const auto& cfg = bundled(Biome::Forest);
  auto m = map_from_rows(cfg, {",:T", "::,"});
  const auto r = apply_edit(m, place(ObjectKind::TreasureChest, 0, "gold"), cfg);
  ASSERT_TRUE(r.accepted);
  ASSERT_EQ(m.objects.size(), 1u);
  EXPECT_EQ(m.objects[0].label, "gold");
  EXPECT_EQ(m.objects[0].created_at, 1);
  EXPECT_EQ(r.objects_added.size(), 1u);
}

TEST(Objects, SecondObjectOnSameCellRejected) {
  const auto& cfg = bundled(Biome::Forest);
  auto m = map_from_rows(cfg, {",:T", "::,"});
  ASSERT_TRUE(apply_edit(m, place(ObjectKind::Trap, 1), cfg).accepted);
  EXPECT_FALSE(apply_edit(m, place(ObjectKind::Key, 1), cfg).accepted);
  EXPECT_EQ(m.objects.size(), 1u);
}

TEST(Objects, LockedDoorOnBoulderRejected) {
  const auto& cfg = bundled(Biome::Desert);
  auto m = map_from_rows(cfg, {".O.", "..."});
  const auto snap = bytes(m, cfg.tileset);
  EXPECT_FALSE(apply_edit(m, place(ObjectKind::LockedDoor, 1), cfg).accepted);
  EXPECT_EQ(bytes(m, cfg.tileset), snap);
  EXPECT_TRUE(apply_edit(m, place(ObjectKind::LockedDoor, 0), cfg).accepted);
  // Other kinds may sit on impassable tiles.
  EXPECT_TRUE(apply_edit(m, place(ObjectKind::Trap, 1), cfg).accepted);
}

TEST(Objects, PlaceThenRemoveRoundTrip) {
  const auto& cfg = bundled(Biome::Desert);
  auto m = map_from_rows(cfg, {".O.", "..."});
  ASSERT_TRUE(apply_edit(m, place(ObjectKind::Key, 4), cfg).accepted);
  const auto objects = m.objects;
  ASSERT_TRUE(apply_edit(m, place(ObjectKind::Trap, 5), cfg).accepted);
  const auto r = apply_edit(m, cmd(EditOp::RemoveObject, {5}), cfg);
  ASSERT_TRUE(r.accepted);
  EXPECT_EQ(r.objects_removed, std::vector<int>{5});
  EXPECT_EQ(m.objects, objects);
  EXPECT_EQ(m.version, 3);
}

TEST(Objects, RemoveFromEmptyCellRejected) {
  const auto& cfg = bundled(Biome::Desert);
  auto m = map_from_rows(cfg, {".O.", "..."});
  const auto r = remove_object(m, 2);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.map_version, 0);
}

TEST(Edits, RandomSequenceInvariants) {
  for (Biome b : {Biome::City, Biome::Desert, Biome::Forest}) {
    const auto& cfg = bundled(b);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto original = generate(cfg, 10, 10, seed);
      auto m = original;
      Rng rng(derive_seed(seed, 99));
      std::vector<EditCommand> log;
      for (int k = 0; k < 40; ++k) {
        EditCommand c;
        const int cell = static_cast<int>(rng.below(104)) - 2;  // a few out of bounds
        switch (rng.below(4)) {
          case 0: c = cmd(EditOp::ClearPath, {cell}); break;
          case 1: c = cmd(EditOp::BlockPath, {cell, static_cast<int>(rng.below(100))}); break;
          case 2: c = place(static_cast<ObjectKind>(rng.below(4)), cell); break;
          default: c = cmd(EditOp::RemoveObject, {cell}); break;
        }
        const auto snap = bytes(m, cfg.tileset);
        const int version = m.version;
        const auto r = apply_edit(m, c, cfg);
        if (!r.accepted) {
          ASSERT_EQ(bytes(m, cfg.tileset), snap);
          ASSERT_FALSE(r.reason.empty());
          continue;
        }
        ASSERT_EQ(m.version, version + 1);
        ASSERT_EQ(r.map_version, m.version);
        log.push_back(c);
        for (const auto& ch : r.changed_cells) {
          EXPECT_EQ(cfg.tileset.tile(m.grid.cells[static_cast<std::size_t>(ch.cell)].tile).id, ch.new_tile);
          for_each_neighbor(m.grid, ch.cell, [&](int n, Direction d) {
            EXPECT_TRUE(cfg.tileset.compatible(m.grid.cells[static_cast<std::size_t>(ch.cell)].tile, d,
                                               m.grid.cells[static_cast<std::size_t>(n)].tile));
          });
        }
        for (const auto& o : m.objects) {
          if (o.kind == ObjectKind::LockedDoor) EXPECT_TRUE(walkable(m, cfg.tileset, o.cell));
        }
      }
      ASSERT_FALSE(log.empty());
      EXPECT_EQ(bytes(replay_edits(original, log, cfg), cfg.tileset), bytes(m, cfg.tileset));
    }
  }
}

TEST(Edits, ReplayRejectsForeignLog) {
  const auto& cfg = bundled(Biome::Desert);
  const auto m = map_from_rows(cfg, {".O.", "..."});
  EXPECT_THROW(replay_edits(m, {cmd(EditOp::RemoveObject, {0})}, cfg), std::runtime_error);
}

TEST(EditJson, CommandRoundTrip) {
  auto c = place(ObjectKind::LockedDoor, 12, "vault");
  c.base_version = 4;
  const auto back = command_from_json(command_to_json(c));
  EXPECT_EQ(back.op, c.op);
  EXPECT_EQ(back.cells, c.cells);
  EXPECT_EQ(back.actor, "dm");
  EXPECT_EQ(back.base_version, 4);
  ASSERT_TRUE(back.object);
  EXPECT_EQ(back.object->kind, ObjectKind::LockedDoor);
  EXPECT_EQ(back.object->label, "vault");
}

TEST(EditJson, MalformedCommandsThrow) {
  using nlohmann::json;
  EXPECT_THROW(command_from_json(json::array()), EditParseError);
  EXPECT_THROW(command_from_json(json{{"op", "dig"}, {"cells", {1}}}), EditParseError);
  EXPECT_THROW(command_from_json(json{{"op", "clear_path"}, {"cells", json::array()}}), EditParseError);
  EXPECT_THROW(command_from_json(json{{"op", "place_object"}, {"cells", {1}}}), EditParseError);
  EXPECT_THROW(command_from_json(json{{"op", "clear_path"}, {"cells", "x"}}), EditParseError);
}

TEST(EditJson, ResultCarriesReasonOnlyOnReject) {
  EditResult ok;
  ok.accepted = true;
  EXPECT_FALSE(result_to_json(ok).contains("reason"));
  EditResult no;
  no.reason = "nope";
  EXPECT_EQ(result_to_json(no).at("reason"), "nope");
}
