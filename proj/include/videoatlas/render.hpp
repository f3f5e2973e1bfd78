#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "videoatlas/evidence.hpp"
#include "videoatlas/image.hpp"
#include "videoatlas/timeline.hpp"

namespace atlas::render {

using timeline::Interval;

inline constexpr Rgb kSeparator{96, 96, 96};
inline constexpr Rgb kMissingFrame{24, 24, 24};

struct CellMeta {
    int index = 0;
    Interval interval;
    bool blacked = false;
    std::string label;
};

/// Tiled contact sheet. Dimensions are exactly (cols * tile_px) x (rows * tile_px);
/// the last row and column of every tile hold the 1-px separator.
struct GridImage {
    ImagePtr pixels;
    int rows = 0;
    int cols = 0;
    int tile_px = 0;
    std::vector<CellMeta> cells;

    const Raster& raster() const { return pixels->raster(); }
    /// Tile contents without the separator row/column.
    Raster tile(int index) const;
};

struct LabelStyle {
    int scale = 0;  // 0: pick from tile size
    Rgb fg = kWhite;
    Rgb bg = kBlack;
};

/// Pixels reserved at the top of a tile for one burned-in text line.
int label_band_px(int tile_px, const LabelStyle& style = {});

struct GridTile {
    std::optional<Raster> frame;  // absent: rendered as a dark placeholder
    std::string label;
    bool dead = false;
    Interval interval;
};

/// Row-major k x k tiling. Live tiles carry their frame with the label burned in
/// the top-left and encoded in a 1-px strip on the tile's first row; dead tiles
/// are solid black. Throws Error unless tiles.size() == k * k.
GridImage compose_grid(int k, int tile_px, const std::vector<GridTile>& tiles, const LabelStyle& style = {});

/// 1 x n strip, used for temporal context scans.
GridImage compose_strip(int tile_px, const std::vector<GridTile>& tiles, const LabelStyle& style = {});

/// Smallest square grid holding every item, labels in insertion order with
/// timestamp and first subtitle line burned in. Throws Error on an empty list.
GridImage render_scratchpad(const std::vector<EvidenceItem>& items, int tile_px, const LabelStyle& style = {});

/// Spreadsheet column name: 0 -> A, 25 -> Z, 26 -> AA.
std::string label_for(std::size_t index);

/// Label text recovered from a tile's machine-readable strip.
std::optional<std::string> read_tile_label(const GridImage& grid, int index);

}  // namespace atlas::render
