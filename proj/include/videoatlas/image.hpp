#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atlas {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};

/// Row-major RGB8 raster.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, Rgb fill = kBlack);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const {
        const std::uint8_t* p = &data_[offset(x, y)];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        std::uint8_t* p = &data_[offset(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    /// Clipped to the raster bounds.
    void fill_rect(int x, int y, int w, int h, Rgb c);
    void blit(const Raster& src, int x, int y);
    Raster crop(int x, int y, int w, int h) const;

    std::span<const std::uint8_t> bytes() const { return data_; }
    std::span<std::uint8_t> bytes() { return data_; }
    const std::uint8_t* row(int y) const { return data_.data() + offset(0, y); }
    std::uint8_t* row(int y) { return data_.data() + offset(0, y); }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

Raster resize_nearest(const Raster& src, int width, int height);

/// One hash per patch_px x patch_px patch, row-major over the patch grid
/// (partial patches at the right/bottom edge included). This is the image's
/// token stream for the cost model and the prefix-cache simulator.
std::vector<std::uint64_t> compute_patch_hashes(const Raster& r, int patch_px);

/// Immutable raster shared between observations, prompts and the cache
/// simulator; the patch hashes are computed once per image.
class SharedImage {
public:
    explicit SharedImage(Raster r) : raster_(std::move(r)) {}

    const Raster& raster() const { return raster_; }
    int width() const { return raster_.width(); }
    int height() const { return raster_.height(); }
    const std::vector<std::uint64_t>& patch_hashes(int patch_px) const;

private:
    Raster raster_;
    mutable std::mutex mu_;
    mutable int memo_px_ = 0;
    mutable std::vector<std::uint64_t> memo_;
};

using ImagePtr = std::shared_ptr<const SharedImage>;

inline ImagePtr make_image(Raster r) { return std::make_shared<const SharedImage>(std::move(r)); }

std::uint64_t content_hash(const Raster& r);

// PNG (8-bit RGB, no interlace, default filters). Output is deterministic for a
// given raster.
std::vector<std::uint8_t> encode_png(const Raster& r);
Raster decode_png(std::span<const std::uint8_t> bytes);
void write_png_file(const std::filesystem::path& path, const Raster& r);
Raster read_png_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// 5x7 bitmap font. Characters outside printable ASCII render as '?'.
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

int text_width(std::string_view text, int scale);
void draw_text(Raster& r, int x, int y, std::string_view text, int scale, Rgb fg);

// Machine-readable marks: a run of bits drawn as pure black/white blocks so
// tests can read burned-in data back without OCR.
void write_bits(Raster& r, int x, int y, int cell_w, int cell_h, std::uint64_t value, int nbits);
/// Returns nullopt if any sampled block is not pure black or pure white.
std::optional<std::uint64_t> read_bits(const Raster& r, int x, int y, int cell_w, int cell_h, int nbits);

/// Bytes of `text` as an 8-bit-per-char strip, prefixed by a length byte.
void write_text_strip(Raster& r, int x, int y, int max_width, std::string_view text);
std::optional<std::string> read_text_strip(const Raster& r, int x, int y, int max_width);

}  // namespace atlas
