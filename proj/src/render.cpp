#include "videoatlas/render.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::render {

namespace {

int pick_scale(int tile_px, const LabelStyle& style) {
    return style.scale > 0 ? style.scale : std::max(1, tile_px / 160);
}

// One text line in a black box; returns the y just below the box.
int burn_line(Raster& r, int x0, int y, int tile_px, const std::string& text, const LabelStyle& style) {
    const int scale = pick_scale(tile_px, style);
    const int box_h = kGlyphHeight * scale + 4;
    if (text.empty()) return y + box_h;
    // Clip to what fits inside the tile (minus separator).
    const int max_chars = std::max(1, (tile_px - 6) / ((kGlyphWidth + 1) * scale));
    const std::string shown = text.substr(0, static_cast<std::size_t>(max_chars));
    r.fill_rect(x0, y, text_width(shown, scale) + 4, box_h, style.bg);
    draw_text(r, x0 + 2, y + 2, shown, scale, style.fg);
    return y + box_h;
}

void draw_separators(Raster& r, int x0, int y0, int tile_px) {
    r.fill_rect(x0 + tile_px - 1, y0, 1, tile_px, kSeparator);
    r.fill_rect(x0, y0 + tile_px - 1, tile_px, 1, kSeparator);
}

void draw_tile(Raster& r, int x0, int y0, int tile_px, const GridTile& t, const LabelStyle& style) {
    if (t.dead) {
        r.fill_rect(x0, y0, tile_px, tile_px, kBlack);
    } else {
        if (t.frame) {
            if (t.frame->width() == tile_px && t.frame->height() == tile_px) {
                r.blit(*t.frame, x0, y0);
            } else {
                r.blit(resize_nearest(*t.frame, tile_px, tile_px), x0, y0);
            }
        } else {
            r.fill_rect(x0, y0, tile_px, tile_px, kMissingFrame);
        }
        burn_line(r, x0, y0 + 1, tile_px, t.label, style);
        write_text_strip(r, x0, y0, tile_px - 1, t.label);
    }
    draw_separators(r, x0, y0, tile_px);
}

GridImage compose(int rows, int cols, int tile_px, const std::vector<GridTile>& tiles, const LabelStyle& style) {
    if (tile_px < 8) throw Error(fmt::format("tile size {} too small", tile_px));
    Raster r(cols * tile_px, rows * tile_px);
    GridImage g;
    g.rows = rows;
    g.cols = cols;
    g.tile_px = tile_px;
    for (int i = 0; i < rows * cols; ++i) {
        const int x0 = (i % cols) * tile_px;
        const int y0 = (i / cols) * tile_px;
        if (static_cast<std::size_t>(i) < tiles.size()) {
            draw_tile(r, x0, y0, tile_px, tiles[static_cast<std::size_t>(i)], style);
            const auto& t = tiles[static_cast<std::size_t>(i)];
            g.cells.push_back({i, t.interval, t.dead, t.label});
        } else {
            draw_separators(r, x0, y0, tile_px);
        }
    }
    g.pixels = make_image(std::move(r));
    return g;
}

}  // namespace

Raster GridImage::tile(int index) const {
    const int x0 = (index % cols) * tile_px;
    const int y0 = (index / cols) * tile_px;
    return raster().crop(x0, y0, tile_px - 1, tile_px - 1);
}

int label_band_px(int tile_px, const LabelStyle& style) {
    return 1 + kGlyphHeight * pick_scale(tile_px, style) + 4;
}

GridImage compose_grid(int k, int tile_px, const std::vector<GridTile>& tiles, const LabelStyle& style) {
    if (k < 1 || tiles.size() != static_cast<std::size_t>(k * k)) {
        throw Error(fmt::format("compose_grid: expected {} tiles, got {}", k * k, tiles.size()));
    }
    return compose(k, k, tile_px, tiles, style);
}

GridImage compose_strip(int tile_px, const std::vector<GridTile>& tiles, const LabelStyle& style) {
    if (tiles.empty()) throw Error("compose_strip: no tiles");
    return compose(1, static_cast<int>(tiles.size()), tile_px, tiles, style);
}

std::string label_for(std::size_t index) {
    std::string out;
    std::size_t n = index + 1;
    while (n > 0) {
        --n;
        out.insert(out.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return out;
}

GridImage render_scratchpad(const std::vector<EvidenceItem>& items, int tile_px, const LabelStyle& style) {
    if (items.empty()) throw Error("render_scratchpad: empty scratchpad");
    int side = 1;
    while (static_cast<std::size_t>(side * side) < items.size()) ++side;

    Raster r(side * tile_px, side * tile_px);
    GridImage g;
    g.rows = side;
    g.cols = side;
    g.tile_px = tile_px;
    for (int i = 0; i < side * side; ++i) {
        const int x0 = (i % side) * tile_px;
        const int y0 = (i / side) * tile_px;
        if (static_cast<std::size_t>(i) < items.size()) {
            const auto& item = items[static_cast<std::size_t>(i)];
            if (item.image) {
                r.blit(resize_nearest(item.image->raster(), tile_px, tile_px), x0, y0);
            } else {
                r.fill_rect(x0, y0, tile_px, tile_px, kMissingFrame);
            }
            const std::string header = fmt::format("[{}] @{:.1f}s", item.label, item.timestamp_s);
            const int y = burn_line(r, x0, y0 + 1, tile_px, header, style);
            const auto nl = item.subtitle.find('\n');
            burn_line(r, x0, y, tile_px, item.subtitle.substr(0, nl), style);
            write_text_strip(r, x0, y0, tile_px - 1, item.label);
            g.cells.push_back({i, {item.timestamp_s, item.timestamp_s}, false, item.label});
        }
        draw_separators(r, x0, y0, tile_px);
    }
    g.pixels = make_image(std::move(r));
    return g;
}

std::optional<std::string> read_tile_label(const GridImage& grid, int index) {
    const int x0 = (index % grid.cols) * grid.tile_px;
    const int y0 = (index / grid.cols) * grid.tile_px;
    return read_text_strip(grid.raster(), x0, y0, grid.tile_px - 1);
}

}  // namespace atlas::render
