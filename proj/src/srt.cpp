#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <optional>
#include <sstream>

#include "videoatlas/media.hpp"

namespace atlas::media {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

// HH:MM:SS,mmm
std::optional<double> parse_time(std::string_view s) {
    if (s.size() != 12 || s[2] != ':' || s[5] != ':' || s[8] != ',') return std::nullopt;
    auto h = parse_int(s.substr(0, 2));
    auto m = parse_int(s.substr(3, 2));
    auto sec = parse_int(s.substr(6, 2));
    auto ms = parse_int(s.substr(9, 3));
    if (!h || !m || !sec || !ms || *m > 59 || *sec > 59) return std::nullopt;
    return *h * 3600.0 + *m * 60.0 + *sec + *ms / 1000.0;
}

std::optional<std::pair<double, double>> parse_timing_line(std::string_view line) {
    const auto arrow = line.find("-->");
    if (arrow == std::string_view::npos) return std::nullopt;
    auto lhs = trim(line.substr(0, arrow));
    auto rhs = trim(line.substr(arrow + 3));
    // Positioning hints may follow the end time ("... --> 00:00:02,500 X1:..").
    if (auto sp = rhs.find(' '); sp != std::string_view::npos) rhs = rhs.substr(0, sp);
    auto a = parse_time(lhs);
    auto b = parse_time(rhs);
    if (!a || !b || !(*a < *b)) return std::nullopt;
    return std::pair{*a, *b};
}

}  // namespace

SrtParseResult parse_srt(std::string_view bytes) {
    SrtParseResult out;
    if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);

    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) nl = bytes.size();
        auto line = bytes.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }

    std::size_t i = 0;
    while (i < lines.size()) {
        while (i < lines.size() && trim(lines[i]).empty()) ++i;
        if (i >= lines.size()) break;
        std::vector<std::string_view> block;
        while (i < lines.size() && !trim(lines[i]).empty()) block.push_back(lines[i++]);

        auto index = block.empty() ? std::nullopt : parse_int(trim(block[0]));
        auto timing = block.size() >= 2 ? parse_timing_line(block[1]) : std::nullopt;
        if (!index || !timing) {
            ++out.warnings;
            continue;
        }
        SubtitleCue cue;
        cue.index = *index;
        cue.start_s = timing->first;
        cue.end_s = timing->second;
        for (std::size_t j = 2; j < block.size(); ++j) {
            if (j > 2) cue.text += '\n';
            cue.text += block[j];
        }
        out.cues.push_back(std::move(cue));
    }
    std::stable_sort(out.cues.begin(), out.cues.end(),
                     [](const SubtitleCue& a, const SubtitleCue& b) { return a.start_s < b.start_s; });
    return out;
}

std::string format_srt_time(double seconds) {
    auto ms = static_cast<long long>(std::llround(seconds * 1000.0));
    if (ms < 0) ms = 0;
    const long long h = ms / 3600000;
    ms %= 3600000;
    const long long m = ms / 60000;
    ms %= 60000;
    const long long s = ms / 1000;
    ms %= 1000;
    return fmt::format("{:02}:{:02}:{:02},{:03}", h, m, s, ms);
}

std::string serialize_srt(const std::vector<SubtitleCue>& cues) {
    std::string out;
    for (const auto& c : cues) {
        out += fmt::format("{}\n{} --> {}\n{}\n\n", c.index, format_srt_time(c.start_s), format_srt_time(c.end_s),
                           c.text);
    }
    return out;
}

std::vector<SubtitleCue> merge_subtitles(const std::vector<SubtitleTrack>& tracks) {
    std::vector<SubtitleCue> out;
    for (const auto& track : tracks) {
        for (auto cue : track.cues) {
            cue.start_s += track.offset_s;
            cue.end_s += track.offset_s;
            out.push_back(std::move(cue));
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SubtitleCue& a, const SubtitleCue& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].index = static_cast<int>(i + 1);
    return out;
}

std::vector<SubtitleCue> cues_in_window(std::span<const SubtitleCue> cues, const Interval& window) {
    std::vector<SubtitleCue> out;
    // Cues starting at or after the window end cannot overlap; sorted input lets
    // us stop there.
    auto last = std::lower_bound(cues.begin(), cues.end(), window.end_s,
                                 [](const SubtitleCue& c, double t) { return c.start_s < t; });
    for (auto it = cues.begin(); it != last; ++it) {
        if (it->end_s > window.start_s) out.push_back(*it);
    }
    return out;
}

}  // namespace atlas::media
