#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "videoatlas/image.hpp"
#include "videoatlas/timeline.hpp"

namespace atlas::media {

using timeline::Interval;
using timeline::VideoSpan;

inline constexpr int kDefaultTilePx = 320;

struct Frame {
    Raster pixels;
    double timestamp_s = 0.0;
};

struct SubtitleCue {
    int index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string text;

    friend bool operator==(const SubtitleCue&, const SubtitleCue&) = default;
};

// --- SRT ---------------------------------------------------------------------

struct SrtParseResult {
    std::vector<SubtitleCue> cues;  // sorted by start_s
    int warnings = 0;               // malformed blocks skipped
};

SrtParseResult parse_srt(std::string_view bytes);
std::string serialize_srt(const std::vector<SubtitleCue>& cues);

/// "HH:MM:SS,mmm"
std::string format_srt_time(double seconds);

struct SubtitleTrack {
    std::vector<SubtitleCue> cues;
    double offset_s = 0.0;
};

/// Shifts each track by its offset, sorts globally (stable on ties) and
/// renumbers from 1.
std::vector<SubtitleCue> merge_subtitles(const std::vector<SubtitleTrack>& tracks);

/// Cues whose [start, end) overlaps `window`, in input order. `cues` must be
/// sorted by start.
std::vector<SubtitleCue> cues_in_window(std::span<const SubtitleCue> cues, const Interval& window);

// --- frame sources -------------------------------------------------------------

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual VideoSpan span() const = 0;
    virtual std::string id() const = 0;
    virtual int tile_px() const = 0;
    /// Frame nearest to t, scaled to tile_px x tile_px. Throws MediaError when
    /// t is outside [0, duration).
    virtual Frame frame_at(double t) = 0;
};

// --- synthetic video -------------------------------------------------------------

struct PlantedEvent {
    double t_s = 0.0;
    int glyph = 0;  // 0..25, drawn as the letter 'A' + glyph
    Rgb color{220, 40, 40};
    double width_s = 1.0;  // glyph visible while |t - t_s| <= width_s / 2
};

struct SyntheticVideoSpec {
    double duration_s = 60.0;
    double fps = 25.0;
    std::uint64_t seed = 0;
    std::vector<PlantedEvent> events;
    int tile_px = kDefaultTilePx;

    /// Throws MediaError if an event lies outside [0, duration).
    void validate() const;
};

/// Deterministic frame. Background depends only on (seed, floor(t)); a planted
/// event's glyph and marker strip appear within its visibility window; the
/// frame index floor(t * fps) is written as a 32-bit strip near the bottom.
Frame synth_frame(const SyntheticVideoSpec& spec, double t);

/// Reads back floor(t * fps) from a synthetic frame.
std::optional<std::uint32_t> decode_timestamp_strip(const Raster& frame);

/// Glyph id if a synthetic event marker is present in the frame.
std::optional<int> detect_glyph(const Raster& frame);

class SyntheticSource final : public FrameSource {
public:
    explicit SyntheticSource(SyntheticVideoSpec spec);

    VideoSpan span() const override { return {spec_.duration_s, spec_.fps}; }
    std::string id() const override;
    int tile_px() const override { return spec_.tile_px; }
    Frame frame_at(double t) override;

    const SyntheticVideoSpec& spec() const { return spec_; }

private:
    SyntheticVideoSpec spec_;
};

// --- external decoder ---------------------------------------------------------------

/// Frames produced by an external decoder process invoked as
///   <decoder> <input path> <timestamp seconds> <output png> <edge pixels>
/// which must exit 0 after writing one PNG. Results are cached per
/// (source, snapped frame index); concurrent requests for the same frame share
/// a single decode.
class DecoderSource final : public FrameSource {
public:
    DecoderSource(std::filesystem::path input, VideoSpan span, std::string decoder, int tile_px = kDefaultTilePx,
                  std::filesystem::path scratch_dir = {});

    VideoSpan span() const override { return span_; }
    std::string id() const override { return input_.string(); }
    int tile_px() const override { return tile_px_; }
    Frame frame_at(double t) override;

    /// Number of decoder processes launched so far.
    int decode_count() const;

private:
    Raster run_decoder(double t);

    std::filesystem::path input_;
    VideoSpan span_;
    std::string decoder_;
    int tile_px_;
    std::filesystem::path scratch_dir_;

    mutable std::mutex mu_;
    std::map<long long, std::shared_future<Raster>> cache_;
    int decodes_ = 0;
    int next_tmp_ = 0;
};

// --- concatenation --------------------------------------------------------------------

struct ConcatSegment {
    std::string source_id;
    double offset_s = 0.0;
    double duration_s = 0.0;
};

/// Segments laid end to end on one global timeline.
class ConcatSource {
public:
    ConcatSource() = default;
    /// Offsets are assigned cumulatively in the given order.
    static ConcatSource from_durations(const std::vector<std::pair<std::string, double>>& ordered);
    /// Checks offsets strictly increase and segments tile [0, total).
    static ConcatSource from_segments(std::vector<ConcatSegment> segments);

    const std::vector<ConcatSegment>& segments() const { return segments_; }
    double total_s() const { return total_s_; }

    /// (segment index, local time) for a global time in [0, total).
    std::pair<std::size_t, double> locate(double global_t) const;
    double to_global(std::size_t segment, double local_t) const;

private:
    std::vector<ConcatSegment> segments_;
    double total_s_ = 0.0;
};

/// Routes frame requests to per-segment sources.
class ConcatFrameSource final : public FrameSource {
public:
    ConcatFrameSource(ConcatSource layout, std::vector<std::shared_ptr<FrameSource>> sources);

    VideoSpan span() const override;
    std::string id() const override;
    int tile_px() const override;
    Frame frame_at(double t) override;

private:
    ConcatSource layout_;
    std::vector<std::shared_ptr<FrameSource>> sources_;
};

}  // namespace atlas::media
