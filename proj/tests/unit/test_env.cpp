#include <doctest.h>

#include <algorithm>
#include <random>

#include "videoatlas/env.hpp"
#include "videoatlas/error.hpp"

using namespace atlas;
using namespace atlas::env;

namespace {

Environment make_env(double duration, EnvConfig cfg = {}, std::vector<media::PlantedEvent> events = {},
                     int tile_px = 64) {
    media::SyntheticVideoSpec spec;
    spec.duration_s = duration;
    spec.seed = 11;
    spec.tile_px = tile_px;
    spec.events = std::move(events);
    cfg.tile_px = tile_px;
    std::vector<SubtitleCue> subs;
    for (int i = 0; i * 10.0 < duration; ++i) {
        subs.push_back({i + 1, i * 10.0, i * 10.0 + 5.0, "line " + std::to_string(i)});
    }
    return Environment(std::make_shared<media::SyntheticSource>(spec), subs, cfg);
}

bool tile_black(const render::GridImage& g, int index) {
    const Raster t = g.tile(index);
    const auto b = t.bytes();
    return std::all_of(b.begin(), b.end(), [](std::uint8_t v) { return v == 0; });
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("root state and observation") {
    auto env = make_env(3600.0, {}, {}, 128);
    auto [s, obs] = env.init_env();
    CHECK(s.depth == 0);
    CHECK(s.nav_stack.empty());
    CHECK(s.span_s() == doctest::Approx(3600.0));
    CHECK(obs->cells.size() == 64);
    CHECK(obs->cells[1].interval.start_s == doctest::Approx(56.25));
    CHECK(obs->grid.raster().width() == 8 * 128);
    CHECK(obs->available == ActionSet{ActionKind::Expand, ActionKind::Zoom, ActionKind::Investigate,
                                      ActionKind::AddToScratchpad, ActionKind::Finished});
    CHECK(render::read_tile_label(obs->grid, 1) == "1 @84.4s");
}

TEST_CASE("expand and backtrack move through the hierarchy") {
    auto env = make_env(36000.0);
    auto s = env.init_state();
    const auto r = env.step(s, Action::expand(1));
    CHECK(s.depth == 1);
    CHECK(s.position.start_s == doctest::Approx(562.5));
    CHECK(s.position.end_s == doctest::Approx(1125.0));
    CHECK(r.observation->available.contains(ActionKind::Backtrack));
    env.step(s, Action::expand(2));
    CHECK(s.depth == 2);
    CHECK(s.address() == timeline::CellAddress(8, {1, 2}));
    env.step(s, Action::backtrack());
    env.step(s, Action::backtrack());
    CHECK(s.depth == 0);
    CHECK(s.position == env.init_state().position);
    CHECK_THROWS_AS(env.step(s, Action::backtrack()), InvalidActionError);
}

TEST_CASE("expand stops at the floor and the depth cap") {
    auto env = make_env(60.0);
    auto s = env.init_state();
    CHECK_FALSE(env.available_actions(s).contains(ActionKind::Expand));
    CHECK_THROWS_AS(env.step(s, Action::expand(0)), InvalidActionError);

    EnvConfig capped;
    capped.max_depth = 1;
    auto env2 = make_env(36000.0, capped);
    auto s2 = env2.init_state();
    env2.step(s2, Action::expand(0));
    CHECK_FALSE(env2.available_actions(s2).contains(ActionKind::Expand));
}

TEST_CASE("cell arguments are checked") {
    auto env = make_env(3600.0);
    auto s = env.init_state();
    CHECK_THROWS_AS(env.step(s, Action::zoom(64)), AddressError);
    CHECK_THROWS_AS(env.step(s, Action::zoom(-1)), AddressError);
    CHECK_THROWS_AS(env.step(s, Action{ActionKind::Zoom, {1, 2}, Direction::After, {}}), InvalidActionError);
    CHECK_THROWS_AS(env.step(s, Action::mark_promising({1})), InvalidActionError);
    env.add_dead_zone(s, s.position, 0);
    CHECK_THROWS_AS(env.step(s, Action::zoom(3)), DeadCellError);
}

TEST_CASE("zoom returns the midpoint frame") {
    auto env = make_env(64.0, {}, {{10.5, 3, {220, 40, 40}, 0.2}});
    auto s = env.init_state();
    const auto r = env.step(s, Action::zoom(10));
    CHECK(r.frame_t == doctest::Approx(10.5));
    CHECK(media::detect_glyph(r.frame->raster()) == 3);
    CHECK_FALSE(r.terminal);
}

TEST_CASE("investigate scans the neighbouring window") {
    auto env = make_env(64.0);
    auto s = env.init_state();
    const auto after = env.step(s, Action::investigate(5, Direction::After));
    REQUIRE(after.strip.has_value());
    CHECK(after.strip->cells.size() == 8);
    CHECK(after.strip->cells.front().interval.start_s == doctest::Approx(6.0));
    CHECK(after.strip->cells.back().interval.end_s == doctest::Approx(7.0));
    const auto before = env.step(s, Action::investigate(5, Direction::Before));
    CHECK(before.strip->cells.front().interval.start_s == doctest::Approx(4.0));
    // No time before the first cell: falls back to the cell itself.
    const auto edge = env.step(s, Action::investigate(0, Direction::Before));
    CHECK(edge.strip->cells.front().interval.start_s == doctest::Approx(0.0));
    CHECK(edge.strip->cells.back().interval.end_s == doctest::Approx(1.0));
}

TEST_CASE("scratchpad labels are never reused") {
    auto env = make_env(100.0);
    auto s = env.init_state();
    auto r = env.step(s, Action::add({{12.0, "first", 0.9}, {36.0, "second", 0.8}}));
    CHECK(r.labels == std::vector<std::string>{"A", "B"});
    CHECK(s.scratchpad.items()[0].subtitle == "line 1");
    CHECK(s.scratchpad.items()[1].subtitle.empty());
    env.prune_evidence(s, {"A"});
    r = env.step(s, Action::add({{40.0, "third", 0.7}}));
    CHECK(r.labels == std::vector<std::string>{"C"});
    CHECK_THROWS_AS(env.prune_evidence(s, {"B", "Z"}), UnknownLabelError);
    CHECK(s.scratchpad.size() == 2);
    CHECK_THROWS_AS(env.step(s, Action::add({{100.0, "late", 0.5}})), InvalidActionError);
    CHECK_THROWS_AS(env.step(s, Action::add({})), InvalidActionError);
}

TEST_CASE("finished blacks out the region except guarded evidence") {
    auto env = make_env(64.0);
    auto s = env.init_state();
    env.step(s, Action::add({{20.2, "e", 0.9}}));
    const auto r = env.step(s, Action::finished());
    CHECK(r.terminal);
    CHECK(s.finished);
    REQUIRE(r.dead_zones.size() == 2);
    CHECK(r.dead_zones[0].end_s == doctest::Approx(19.7));
    CHECK(r.dead_zones[1].start_s == doctest::Approx(20.7));
    CHECK(s.dead_zones.measure() == doctest::Approx(63.0));
    CHECK(env.available_actions(s) == ActionSet{});

    auto fresh = env.init_state();
    fresh.dead_zones = s.dead_zones;
    const auto obs = env.observe(fresh);
    // The guard window [19.7, 20.7] leaves cells 19 and 20 below the threshold.
    for (const auto& c : obs->cells) {
        CHECK(c.blacked == (c.index != 19 && c.index != 20));
        CHECK(tile_black(obs->grid, c.index) == c.blacked);
    }
}

TEST_CASE("protected timestamps survive finished") {
    auto env = make_env(64.0);
    auto s = env.worker_state(cell_target(env.span(), timeline::CellAddress(8, {3})), {}, {3.9}, Mode::DFS, 2);
    CHECK(s.round == 2);
    const auto r = env.step(s, Action::finished());
    REQUIRE(r.dead_zones.size() == 1);
    CHECK(r.dead_zones[0].start_s == doctest::Approx(3.0));
    CHECK(r.dead_zones[0].end_s == doctest::Approx(3.4));
    CHECK(s.dead_zones.covered({3.4, 4.0}) == doctest::Approx(0.0));
    CHECK(s.dead_zones.zones().front().round_added == 2);
}

TEST_CASE("dead zone set merges and measures") {
    DeadZoneSet d;
    d.add({0, 1}, 0);
    d.add({2, 3}, 1);
    d.add({0.5, 2.5}, 2);
    CHECK(d.zones().size() == 1);
    CHECK(d.measure() == doctest::Approx(3.0));
    d.add({5, 6}, 3);
    CHECK(d.covered({2, 6}) == doctest::Approx(2.0));
    CHECK(d.coverage({4, 6}) == doctest::Approx(0.5));
    const auto h = d.hash();
    d.add({5.2, 5.8}, 4);
    CHECK(d.hash() == h);
}

TEST_CASE("blackout threshold is a coverage fraction") {
    EnvConfig cfg;
    cfg.blackout_theta = 0.5;
    auto env = make_env(64.0, cfg);
    auto s = env.init_state();
    env.add_dead_zone(s, {4.0, 4.5}, 0);
    env.add_dead_zone(s, {5.0, 5.4}, 0);
    const auto cells = env.describe_cells(s);
    CHECK(cells[4].blacked);
    CHECK_FALSE(cells[5].blacked);
    env.add_dead_zone(s, {-10, 1}, 0);
    CHECK(s.dead_zones.zones().front().interval.start_s == 0.0);
}

TEST_CASE("bfs exposes mark promising with full addresses") {
    auto env = make_env(3600.0);
    auto s = env.worker_state(cell_target(env.span(), timeline::CellAddress(8, {2})), {}, {}, Mode::BFS, 0);
    CHECK(env.available_actions(s).contains(ActionKind::MarkPromising));
    const auto r = env.step(s, Action::mark_promising({4, 9}));
    REQUIRE(r.promising.size() == 2);
    CHECK(r.promising[0].address == timeline::CellAddress(8, {2, 4}));
    CHECK(r.promising[0].depth == 2);
    CHECK(s.promising.size() == 2);
}

TEST_CASE("targets below the depth cap use focus mode") {
    EnvConfig cfg;
    cfg.max_depth = 1;
    auto env = make_env(36000.0, cfg);
    const auto target = cell_target(env.span(), timeline::CellAddress(8, {5, 7}));
    CHECK(target.depth == 2);
    auto s = env.worker_state(target, {}, {}, Mode::DFS, 0);
    CHECK(s.region.focus == 7);
    CHECK(s.depth == 1);
    CHECK_FALSE(env.available_actions(s).contains(ActionKind::Expand));
    CHECK_NOTHROW(env.step(s, Action::zoom(7)));
    CHECK_THROWS_AS(env.step(s, Action::zoom(6)), InvalidActionError);
    const auto r = env.step(s, Action::finished());
    REQUIRE(r.dead_zones.size() == 1);
    CHECK(r.dead_zones[0] == s.region.owned());
    CHECK(r.dead_zones[0].width() == doctest::Approx(36000.0 / 4096));

    const auto too_deep = cell_target(env.span(), timeline::CellAddress(8, {5, 7, 1}));
    CHECK_THROWS_AS(env.worker_state(too_deep, {}, {}, Mode::DFS, 0), InvalidActionError);
}

TEST_CASE("random walks keep the state consistent") {
    auto env = make_env(3600.0);
    std::mt19937_64 rng(99);
    for (int walk = 0; walk < 40; ++walk) {
        auto s = env.init_state();
        for (int step = 0; step < 25 && !s.finished; ++step) {
            const auto kinds = env.available_actions(s).kinds();
            const auto kind = kinds[rng() % kinds.size()];
            const int cell = static_cast<int>(rng() % 64);
            Action a;
            switch (kind) {
                case ActionKind::Expand: a = Action::expand(cell); break;
                case ActionKind::Backtrack: a = Action::backtrack(); break;
                case ActionKind::MarkPromising: a = Action::mark_promising({cell}); break;
                case ActionKind::Zoom: a = Action::zoom(cell); break;
                case ActionKind::Investigate: a = Action::investigate(cell, Direction::Before); break;
                case ActionKind::AddToScratchpad: a = Action::add({{s.center_s(), "x", 0.5}}); break;
                case ActionKind::Finished: a = Action::finished(); break;
            }
            try {
                env.step(s, a);
            } catch (const DeadCellError&) {
            }
            CHECK(s.depth == static_cast<int>(s.nav_stack.size()));
            CHECK(s.position.width() == doctest::Approx(3600.0 / std::pow(64.0, s.depth)));
            CHECK(s.region.grid.contains(s.position));
        }
    }
}

TEST_CASE("state hash tracks memory") {
    auto env = make_env(100.0);
    auto a = env.init_state();
    auto b = env.init_state();
    CHECK(a.hash() == b.hash());
    env.step(b, Action::add({{5.0, "x", 0.5}}));
    CHECK(a.hash() != b.hash());
}

}
