#include "videoatlas/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "videoatlas/error.hpp"
#include "videoatlas/hash.hpp"

namespace atlas {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error("negative raster size");
    data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    if (fill != kBlack) {
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }
}

void Raster::fill_rect(int x, int y, int w, int h, Rgb c) {
    const int x0 = std::max(0, x), y0 = std::max(0, y);
    const int x1 = std::min(width_, x + w), y1 = std::min(height_, y + h);
    if (x0 >= x1 || y0 >= y1) return;
    for (int yy = y0; yy < y1; ++yy) {
        std::uint8_t* p = &data_[offset(x0, yy)];
        for (int xx = x0; xx < x1; ++xx, p += 3) {
            p[0] = c.r;
            p[1] = c.g;
            p[2] = c.b;
        }
    }
}

void Raster::blit(const Raster& src, int x, int y) {
    const int x0 = std::max(0, x), y0 = std::max(0, y);
    const int x1 = std::min(width_, x + src.width()), y1 = std::min(height_, y + src.height());
    if (x0 >= x1 || y0 >= y1) return;
    const std::size_t n = static_cast<std::size_t>(x1 - x0) * 3;
    for (int yy = y0; yy < y1; ++yy) {
        std::memcpy(&data_[offset(x0, yy)], src.row(yy - y) + static_cast<std::size_t>(x0 - x) * 3, n);
    }
}

Raster Raster::crop(int x, int y, int w, int h) const {
    Raster out(w, h);
    const int x0 = std::max(0, x), y0 = std::max(0, y);
    const int x1 = std::min(width_, x + w), y1 = std::min(height_, y + h);
    for (int yy = y0; yy < y1; ++yy) {
        std::memcpy(out.row(yy - y) + static_cast<std::size_t>(x0 - x) * 3, row(yy) + static_cast<std::size_t>(x0) * 3,
                    static_cast<std::size_t>(x1 - x0) * 3);
    }
    return out;
}

Raster resize_nearest(const Raster& src, int width, int height) {
    if (src.width() == width && src.height() == height) return src;
    Raster out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(src.height() - 1, static_cast<int>(static_cast<long long>(y) * src.height() / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(src.width() - 1, static_cast<int>(static_cast<long long>(x) * src.width() / width));
            out.set(x, y, src.at(sx, sy));
        }
    }
    return out;
}

std::vector<std::uint64_t> compute_patch_hashes(const Raster& r, int patch_px) {
    if (patch_px <= 0) throw Error("patch size must be positive");
    const int pcols = (r.width() + patch_px - 1) / patch_px;
    const int prows = (r.height() + patch_px - 1) / patch_px;
    std::vector<std::uint64_t> out(static_cast<std::size_t>(pcols) * static_cast<std::size_t>(prows));
    std::vector<std::uint64_t> acc(static_cast<std::size_t>(pcols));
    for (int pr = 0; pr < prows; ++pr) {
        for (int pc = 0; pc < pcols; ++pc) acc[static_cast<std::size_t>(pc)] = hash_combine(kFnvOffset, pr * 65536ULL + pc);
        const int y1 = std::min(r.height(), (pr + 1) * patch_px);
        for (int y = pr * patch_px; y < y1; ++y) {
            const std::uint8_t* row = r.row(y);
            for (int pc = 0; pc < pcols; ++pc) {
                const int x0 = pc * patch_px;
                const int x1 = std::min(r.width(), x0 + patch_px);
                auto& h = acc[static_cast<std::size_t>(pc)];
                h = hash_bytes_fast(row + static_cast<std::size_t>(x0) * 3, static_cast<std::size_t>(x1 - x0) * 3, h);
            }
        }
        for (int pc = 0; pc < pcols; ++pc) {
            out[static_cast<std::size_t>(pr) * static_cast<std::size_t>(pcols) + static_cast<std::size_t>(pc)] =
                mix64(acc[static_cast<std::size_t>(pc)]);
        }
    }
    return out;
}

const std::vector<std::uint64_t>& SharedImage::patch_hashes(int patch_px) const {
    std::lock_guard lock(mu_);
    if (memo_px_ != patch_px) {
        memo_ = compute_patch_hashes(raster_, patch_px);
        memo_px_ = patch_px;
    }
    return memo_;
}

std::uint64_t content_hash(const Raster& r) {
    std::uint64_t h = hash_combine(static_cast<std::uint64_t>(r.width()), static_cast<std::uint64_t>(r.height()));
    return mix64(hash_bytes_fast(r.bytes().data(), r.bytes().size(), h));
}

// --- PNG -------------------------------------------------------------------

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + len > cur->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(out, cur->bytes.data() + cur->pos, len);
    cur->pos += len;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& r) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width()), static_cast<png_uint_32>(r.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < r.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(r.row(y)));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw MediaError("not a PNG image");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{bytes, 0};
    Raster out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw MediaError("PNG decoding failed");
    }
    png_set_read_fn(png, &cursor, png_read_from_span);
    png_read_info(png, info);
    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out = Raster(width, height);
    for (int y = 0; y < height; ++y) png_read_row(png, out.row(y), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png_file(const std::filesystem::path& path, const Raster& r) {
    const auto bytes = encode_png(r);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw EnvironmentError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Raster read_png_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MediaError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (const std::size_t rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = bytes[i] << 16;
        if (rest == 2) v |= bytes[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

// --- font ------------------------------------------------------------------

namespace {

// Column-major 5x7 glyphs for ASCII 0x20..0x7E, bit 0 is the top row.
constexpr std::array<std::array<std::uint8_t, 5>, 95> kFont = {{
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00}, {0x00, 0x1C, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1C, 0x00}, {0x14, 0x08, 0x3E, 0x08, 0x14}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x60, 0x60, 0x00, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31}, {0x18, 0x14, 0x12, 0x7F, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E}, {0x00, 0x36, 0x36, 0x00, 0x00},
    {0x00, 0x56, 0x36, 0x00, 0x00}, {0x08, 0x14, 0x22, 0x41, 0x00}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x00, 0x41, 0x22, 0x14, 0x08}, {0x02, 0x01, 0x51, 0x09, 0x06}, {0x32, 0x49, 0x79, 0x41, 0x3E},
    {0x7E, 0x11, 0x11, 0x11, 0x7E}, {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x09, 0x01},
    {0x3E, 0x41, 0x49, 0x49, 0x7A}, {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
    {0x7F, 0x02, 0x0C, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
    {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7F, 0x01, 0x01}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x3F, 0x40, 0x38, 0x40, 0x3F}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x07, 0x08, 0x70, 0x08, 0x07}, {0x61, 0x51, 0x49, 0x45, 0x43}, {0x00, 0x7F, 0x41, 0x41, 0x00},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x00, 0x41, 0x41, 0x7F, 0x00}, {0x04, 0x02, 0x01, 0x02, 0x04},
    {0x40, 0x40, 0x40, 0x40, 0x40}, {0x00, 0x01, 0x02, 0x04, 0x00}, {0x20, 0x54, 0x54, 0x54, 0x78},
    {0x7F, 0x48, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x20}, {0x38, 0x44, 0x44, 0x48, 0x7F},
    {0x38, 0x54, 0x54, 0x54, 0x18}, {0x08, 0x7E, 0x09, 0x01, 0x02}, {0x0C, 0x52, 0x52, 0x52, 0x3E},
    {0x7F, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7D, 0x40, 0x00}, {0x20, 0x40, 0x44, 0x3D, 0x00},
    {0x7F, 0x10, 0x28, 0x44, 0x00}, {0x00, 0x41, 0x7F, 0x40, 0x00}, {0x7C, 0x04, 0x18, 0x04, 0x78},
    {0x7C, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38}, {0x7C, 0x14, 0x14, 0x14, 0x08},
    {0x08, 0x14, 0x14, 0x18, 0x7C}, {0x7C, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x20},
    {0x04, 0x3F, 0x44, 0x40, 0x20}, {0x3C, 0x40, 0x40, 0x20, 0x7C}, {0x1C, 0x20, 0x40, 0x20, 0x1C},
    {0x3C, 0x40, 0x30, 0x40, 0x3C}, {0x44, 0x28, 0x10, 0x28, 0x44}, {0x0C, 0x50, 0x50, 0x50, 0x3C},
    {0x44, 0x64, 0x54, 0x4C, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00}, {0x00, 0x00, 0x7F, 0x00, 0x00},
    {0x00, 0x41, 0x36, 0x08, 0x00}, {0x10, 0x08, 0x08, 0x10, 0x08},
}};

const std::array<std::uint8_t, 5>& glyph(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u > 0x7E) return kFont['?' - 0x20];
    return kFont[u - 0x20];
}

}  // namespace

int text_width(std::string_view text, int scale) {
    if (text.empty()) return 0;
    return static_cast<int>(text.size()) * (kGlyphWidth + 1) * scale - scale;
}

void draw_text(Raster& r, int x, int y, std::string_view text, int scale, Rgb fg) {
    int cx = x;
    for (char c : text) {
        const auto& cols = glyph(c);
        for (int col = 0; col < kGlyphWidth; ++col) {
            for (int row = 0; row < kGlyphHeight; ++row) {
                if (cols[static_cast<std::size_t>(col)] & (1u << row)) {
                    r.fill_rect(cx + col * scale, y + row * scale, scale, scale, fg);
                }
            }
        }
        cx += (kGlyphWidth + 1) * scale;
    }
}

void write_bits(Raster& r, int x, int y, int cell_w, int cell_h, std::uint64_t value, int nbits) {
    for (int i = 0; i < nbits; ++i) {
        const bool bit = (value >> (nbits - 1 - i)) & 1u;
        r.fill_rect(x + i * cell_w, y, cell_w, cell_h, bit ? kWhite : kBlack);
    }
}

std::optional<std::uint64_t> read_bits(const Raster& r, int x, int y, int cell_w, int cell_h, int nbits) {
    std::uint64_t v = 0;
    for (int i = 0; i < nbits; ++i) {
        const int sx = x + i * cell_w + cell_w / 2;
        const int sy = y + cell_h / 2;
        if (sx < 0 || sy < 0 || sx >= r.width() || sy >= r.height()) return std::nullopt;
        const Rgb c = r.at(sx, sy);
        if (c == kWhite) {
            v = (v << 1) | 1u;
        } else if (c == kBlack) {
            v <<= 1;
        } else {
            return std::nullopt;
        }
    }
    return v;
}

void write_text_strip(Raster& r, int x, int y, int max_width, std::string_view text) {
    const std::size_t capacity = static_cast<std::size_t>(std::max(0, max_width / 8 - 1));
    text = text.substr(0, std::min(text.size(), std::min<std::size_t>(capacity, 255)));
    write_bits(r, x, y, 1, 1, text.size(), 8);
    for (std::size_t i = 0; i < text.size(); ++i) {
        write_bits(r, x + 8 * static_cast<int>(i + 1), y, 1, 1, static_cast<unsigned char>(text[i]), 8);
    }
}

std::optional<std::string> read_text_strip(const Raster& r, int x, int y, int max_width) {
    auto len = read_bits(r, x, y, 1, 1, 8);
    if (!len || static_cast<int>((*len + 1) * 8) > max_width) return std::nullopt;
    std::string out;
    for (std::uint64_t i = 0; i < *len; ++i) {
        auto c = read_bits(r, x + 8 * static_cast<int>(i + 1), y, 1, 1, 8);
        if (!c) return std::nullopt;
        out += static_cast<char>(*c);
    }
    return out;
}

}  // namespace atlas
