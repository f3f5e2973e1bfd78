#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <fmt/format.h>

#include "videoatlas/error.hpp"
#include "videoatlas/hash.hpp"
#include "videoatlas/media.hpp"

extern char** environ;

namespace atlas::media {

namespace {

constexpr std::uint64_t kGlyphMarker = 0xA5;
constexpr int kMarkerBits = 8;
constexpr int kGlyphBits = 8;
constexpr int kTimestampBits = 32;
constexpr int kStripX = 4;
constexpr int kStripH = 4;

int strip_cell_w(int tile) { return std::max(1, (tile - 8) / 40); }
int timestamp_y(int tile) { return tile - 8; }
int marker_y(int tile) { return tile - 14; }

Rgb background(std::uint64_t seed, double t) {
    const auto second = static_cast<std::uint64_t>(std::floor(t));
    const std::uint64_t h = hash_combine(mix64(seed), second);
    // Mid-range channels only, so background never reads as a black/white mark.
    auto ch = [](std::uint64_t v) { return static_cast<std::uint8_t>(48 + (v & 0x7F)); };
    return {ch(h), ch(h >> 8), ch(h >> 16)};
}

}  // namespace

void SyntheticVideoSpec::validate() const {
    if (!(duration_s > 0.0) || !(fps > 0.0)) throw MediaError("synthetic video needs positive duration and fps");
    if (tile_px < 48) throw MediaError(fmt::format("tile_px {} too small for synthetic frames", tile_px));
    for (const auto& e : events) {
        if (e.t_s < 0.0 || e.t_s >= duration_s) {
            throw MediaError(fmt::format("event at {} s outside [0, {})", e.t_s, duration_s));
        }
        if (e.glyph < 0 || e.glyph > 25) throw MediaError(fmt::format("glyph id {} outside 0..25", e.glyph));
        if (!(e.width_s > 0.0)) throw MediaError("event width must be positive");
    }
}

Frame synth_frame(const SyntheticVideoSpec& spec, double t) {
    if (t < 0.0 || t >= spec.duration_s) {
        throw MediaError(fmt::format("synthetic frame at {} s outside [0, {})", t, spec.duration_s));
    }
    const int tile = spec.tile_px;
    Frame f{Raster(tile, tile, background(spec.seed, t)), t};
    const int cw = strip_cell_w(tile);

    for (const auto& e : spec.events) {
        if (std::abs(t - e.t_s) <= 0.5 * e.width_s) {
            const int q = tile / 4;
            f.pixels.fill_rect(q, q, 2 * q, 2 * q, e.color);
            const int scale = std::max(1, tile / 40);
            const char letter[2] = {static_cast<char>('A' + e.glyph), 0};
            draw_text(f.pixels, tile / 2 - text_width(letter, scale) / 2, tile / 2 - kGlyphHeight * scale / 2, letter,
                      scale, kBlack);
            const std::uint64_t code = (kGlyphMarker << kGlyphBits) | static_cast<std::uint64_t>(e.glyph);
            write_bits(f.pixels, kStripX, marker_y(tile), cw, kStripH, code, kMarkerBits + kGlyphBits);
            break;
        }
    }
    const auto index = static_cast<std::uint64_t>(timeline::frame_index(t, spec.fps));
    write_bits(f.pixels, kStripX, timestamp_y(tile), cw, kStripH, index & 0xFFFFFFFFu, kTimestampBits);
    return f;
}

std::optional<std::uint32_t> decode_timestamp_strip(const Raster& frame) {
    const int tile = frame.height();
    auto v = read_bits(frame, kStripX, timestamp_y(tile), strip_cell_w(tile), kStripH, kTimestampBits);
    if (!v) return std::nullopt;
    return static_cast<std::uint32_t>(*v);
}

std::optional<int> detect_glyph(const Raster& frame) {
    const int tile = frame.height();
    if (tile < 48 || frame.width() != tile) return std::nullopt;
    auto v = read_bits(frame, kStripX, marker_y(tile), strip_cell_w(tile), kStripH, kMarkerBits + kGlyphBits);
    if (!v || (*v >> kGlyphBits) != kGlyphMarker) return std::nullopt;
    return static_cast<int>(*v & 0xFF);
}

SyntheticSource::SyntheticSource(SyntheticVideoSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::string SyntheticSource::id() const {
    return fmt::format("synthetic:{}:{}:{}", spec_.seed, spec_.duration_s, spec_.events.size());
}

Frame SyntheticSource::frame_at(double t) {
    if (t < 0.0 || t >= spec_.duration_s) {
        throw MediaError(fmt::format("t={} outside [0, {})", t, spec_.duration_s));
    }
    double snapped = timeline::snap_to_frame(t, spec_.fps);
    if (snapped >= spec_.duration_s) snapped = std::nextafter(spec_.duration_s, 0.0);
    return synth_frame(spec_, snapped);
}

// --- external decoder -------------------------------------------------------

DecoderSource::DecoderSource(std::filesystem::path input, VideoSpan span, std::string decoder, int tile_px,
                             std::filesystem::path scratch_dir)
    : input_(std::move(input)),
      span_(span),
      decoder_(std::move(decoder)),
      tile_px_(tile_px),
      scratch_dir_(scratch_dir.empty() ? std::filesystem::temp_directory_path() : std::move(scratch_dir)) {
    if (!std::filesystem::exists(input_)) throw MediaError("media file not found: " + input_.string());
}

int DecoderSource::decode_count() const {
    std::lock_guard lock(mu_);
    return decodes_;
}

Frame DecoderSource::frame_at(double t) {
    if (t < 0.0 || t >= span_.duration_s) {
        throw MediaError(fmt::format("t={} outside [0, {}) for {}", t, span_.duration_s, input_.string()));
    }
    const auto key = static_cast<long long>(std::floor(t * span_.fps + 0.5));
    const double snapped = std::min(static_cast<double>(key) / span_.fps, std::nextafter(span_.duration_s, 0.0));

    std::shared_future<Raster> fut;
    std::promise<Raster> mine;
    bool owner = false;
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            fut = it->second;
        } else {
            fut = mine.get_future().share();
            cache_.emplace(key, fut);
            owner = true;
        }
    }
    if (owner) {
        try {
            mine.set_value(run_decoder(snapped));
        } catch (...) {
            {
                std::lock_guard lock(mu_);
                cache_.erase(key);
            }
            mine.set_exception(std::current_exception());
        }
    }
    return Frame{fut.get(), snapped};
}

Raster DecoderSource::run_decoder(double t) {
    std::filesystem::path out;
    {
        std::lock_guard lock(mu_);
        ++decodes_;
        out = scratch_dir_ / fmt::format("atlas_frame_{}_{}.png", ::getpid(), next_tmp_++);
    }
    const std::string ts = fmt::format("{:.6f}", t);
    const std::string edge = std::to_string(tile_px_);
    std::vector<std::string> args{decoder_, input_.string(), ts, out.string(), edge};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    pid_t pid = 0;
    const int rc = ::posix_spawnp(&pid, decoder_.c_str(), nullptr, nullptr, argv.data(), environ);
    if (rc != 0) throw EnvironmentError(fmt::format("cannot launch decoder '{}': errno {}", decoder_, rc));
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR) throw EnvironmentError("waitpid failed for decoder");
    }
    if (!WIFEXITED(status)) throw MediaError("decoder terminated abnormally");
    const int code = WEXITSTATUS(status);
    if (code == 127) throw EnvironmentError(fmt::format("decoder '{}' not found", decoder_));
    if (code != 0) throw MediaError(fmt::format("decoder failed at t={} s (exit {})", ts, code));

    Raster img = read_png_file(out);
    std::error_code ec;
    std::filesystem::remove(out, ec);
    return resize_nearest(img, tile_px_, tile_px_);
}

// --- concatenation ---------------------------------------------------------------

ConcatSource ConcatSource::from_durations(const std::vector<std::pair<std::string, double>>& ordered) {
    std::vector<ConcatSegment> segs;
    double offset = 0.0;
    for (const auto& [id, dur] : ordered) {
        segs.push_back({id, offset, dur});
        offset += dur;
    }
    return from_segments(std::move(segs));
}

ConcatSource ConcatSource::from_segments(std::vector<ConcatSegment> segments) {
    if (segments.empty()) throw MediaError("concatenation needs at least one segment");
    double expected = 0.0;
    for (const auto& s : segments) {
        if (!(s.duration_s > 0.0)) throw MediaError("segment '" + s.source_id + "' has non-positive duration");
        if (std::abs(s.offset_s - expected) > 1e-9 * std::max(1.0, expected)) {
            throw MediaError(fmt::format("segment '{}' offset {} does not follow previous end {}", s.source_id,
                                         s.offset_s, expected));
        }
        expected = s.offset_s + s.duration_s;
    }
    ConcatSource out;
    out.segments_ = std::move(segments);
    out.total_s_ = expected;
    return out;
}

std::pair<std::size_t, double> ConcatSource::locate(double global_t) const {
    if (global_t < 0.0 || global_t >= total_s_) {
        throw MediaError(fmt::format("t={} outside concatenation [0, {})", global_t, total_s_));
    }
    auto it = std::upper_bound(segments_.begin(), segments_.end(), global_t,
                               [](double t, const ConcatSegment& s) { return t < s.offset_s; });
    const auto idx = static_cast<std::size_t>(std::distance(segments_.begin(), it) - 1);
    const auto& seg = segments_[idx];
    return {idx, std::min(global_t - seg.offset_s, std::nextafter(seg.duration_s, 0.0))};
}

double ConcatSource::to_global(std::size_t segment, double local_t) const {
    return segments_.at(segment).offset_s + local_t;
}

ConcatFrameSource::ConcatFrameSource(ConcatSource layout, std::vector<std::shared_ptr<FrameSource>> sources)
    : layout_(std::move(layout)), sources_(std::move(sources)) {
    if (sources_.size() != layout_.segments().size()) {
        throw MediaError("concatenation layout and source list differ in length");
    }
}

VideoSpan ConcatFrameSource::span() const { return {layout_.total_s(), sources_.front()->span().fps}; }

std::string ConcatFrameSource::id() const {
    std::string out = "concat";
    for (const auto& s : layout_.segments()) out += ":" + s.source_id;
    return out;
}

int ConcatFrameSource::tile_px() const { return sources_.front()->tile_px(); }

Frame ConcatFrameSource::frame_at(double t) {
    auto [idx, local] = layout_.locate(t);
    Frame f = sources_[idx]->frame_at(local);
    f.timestamp_s = layout_.to_global(idx, f.timestamp_s);
    return f;
}

}  // namespace atlas::media
