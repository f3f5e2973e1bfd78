#include <doctest.h>

#include <algorithm>

#include "test_util.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/image.hpp"
#include "videoatlas/media.hpp"
#include "videoatlas/render.hpp"

using namespace atlas;
using namespace atlas::render;

namespace {

std::vector<GridTile> numbered_tiles(int n, int tile_px) {
    std::vector<GridTile> tiles;
    for (int i = 0; i < n; ++i) {
        GridTile t;
        t.frame = Raster(tile_px, tile_px, Rgb{static_cast<std::uint8_t>(40 + i), 120, 200});
        t.label = std::to_string(i);
        t.interval = {static_cast<double>(i), static_cast<double>(i + 1)};
        tiles.push_back(std::move(t));
    }
    return tiles;
}

bool all_black(const Raster& r) {
    const auto b = r.bytes();
    return std::all_of(b.begin(), b.end(), [](std::uint8_t v) { return v == 0; });
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("grid dimensions and separators") {
    const auto g = compose_grid(4, 64, numbered_tiles(16, 64));
    CHECK(g.raster().width() == 256);
    CHECK(g.raster().height() == 256);
    CHECK(g.cells.size() == 16);
    CHECK(g.raster().at(63, 10) == kSeparator);
    CHECK(g.raster().at(10, 127) == kSeparator);
    CHECK(g.tile(5).width() == 63);
    CHECK_THROWS_AS(compose_grid(4, 64, numbered_tiles(15, 64)), Error);
}

TEST_CASE("labels are machine readable") {
    const auto g = compose_grid(8, 48, numbered_tiles(64, 48));
    for (int i = 0; i < 64; ++i) CHECK(read_tile_label(g, i) == std::to_string(i));
}

TEST_CASE("dead tiles are pure black") {
    auto tiles = numbered_tiles(4, 64);
    tiles[2].dead = true;
    const auto g = compose_grid(2, 64, tiles);
    CHECK(all_black(g.tile(2)));
    CHECK_FALSE(all_black(g.tile(1)));
    CHECK(g.cells[2].blacked);
    CHECK(read_tile_label(g, 2).value_or("") == "");
}

TEST_CASE("missing frames get a placeholder and frames are rescaled") {
    std::vector<GridTile> tiles(1);
    tiles[0].label = "x";
    auto g = compose_strip(32, tiles);
    CHECK(g.tile(0).at(30, 30) == kMissingFrame);
    tiles[0].frame = Raster(10, 10, kWhite);
    g = compose_strip(32, tiles);
    CHECK(g.tile(0).at(30, 30) == kWhite);
    CHECK_THROWS_AS(compose_strip(32, {}), Error);
}

TEST_CASE("label band leaves the frame body intact") {
    const int band = label_band_px(320);
    CHECK(band > 1);
    CHECK(band < 320 / 4);
    auto tiles = numbered_tiles(1, 320);
    const auto g = compose_strip(320, tiles);
    CHECK(g.tile(0).at(200, band + 5) == tiles[0].frame->at(200, band + 5));
}

TEST_CASE("spreadsheet labels") {
    CHECK(label_for(0) == "A");
    CHECK(label_for(25) == "Z");
    CHECK(label_for(26) == "AA");
    CHECK(label_for(27) == "AB");
    CHECK(label_for(701) == "ZZ");
    CHECK(label_for(702) == "AAA");
}

TEST_CASE("scratchpad uses the smallest square") {
    std::vector<EvidenceItem> items;
    for (int i = 0; i < 5; ++i) {
        items.push_back({label_for(static_cast<std::size_t>(i)), make_image(Raster(20, 20, kWhite)),
                         "line one\nline two", 10.0 * i, 0.9, "d"});
    }
    const auto g = render_scratchpad(items, 64);
    CHECK(g.rows == 3);
    CHECK(g.cols == 3);
    CHECK(g.cells.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(read_tile_label(g, i) == label_for(static_cast<std::size_t>(i)));
    CHECK(render_scratchpad({items[0]}, 64).rows == 1);
    CHECK_THROWS_AS(render_scratchpad({}, 64), Error);
}

TEST_CASE("png round trip is lossless and deterministic") {
    media::SyntheticVideoSpec spec;
    spec.duration_s = 5;
    spec.tile_px = 96;
    const auto frame = media::synth_frame(spec, 2.0).pixels;
    const auto png = encode_png(frame);
    CHECK(png == encode_png(frame));
    CHECK(decode_png(png) == frame);
    testutil::TempDir dir("png");
    write_png_file(dir / "f.png", frame);
    CHECK(read_png_file(dir / "f.png") == frame);
}

TEST_CASE("patch hashes cover partial edge patches") {
    Raster r(30, 20, kWhite);
    CHECK(compute_patch_hashes(r, 14).size() == 3 * 2);
    const auto img = make_image(r);
    CHECK(img->patch_hashes(14) == compute_patch_hashes(r, 14));
    Raster changed = r;
    changed.set(29, 19, kBlack);
    const auto a = compute_patch_hashes(r, 14);
    const auto b = compute_patch_hashes(changed, 14);
    CHECK(a[0] == b[0]);
    CHECK(a[5] != b[5]);
}

TEST_CASE("base64") {
    const std::string s = "foobar";
    const std::vector<std::uint8_t> bytes(s.begin(), s.end());
    CHECK(base64_encode(bytes) == "Zm9vYmFy");
    CHECK(base64_encode(std::span(bytes).first(4)) == "Zm9vYg==");
}

}
