#include "videoatlas/bench.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::bench {

using orchestrator::EpisodeConfig;
using orchestrator::EpisodeResult;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<int> distinct_glyphs(std::mt19937_64& rng, int n) {
    std::vector<int> all(26);
    for (int i = 0; i < 26; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(n));
    return all;
}

std::string letters(const std::vector<int>& glyphs) {
    std::string out;
    for (std::size_t i = 0; i < glyphs.size(); ++i) {
        if (i > 0) out += ", ";
        out += static_cast<char>('A' + glyphs[i]);
    }
    return out;
}

const Rgb kPalette[] = {{220, 40, 40}, {40, 180, 60}, {40, 90, 220}, {230, 160, 20}, {170, 50, 200}};

}  // namespace

std::string glyph_sequence(const std::vector<media::PlantedEvent>& events) {
    std::vector<media::PlantedEvent> sorted = events;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const media::PlantedEvent& a, const media::PlantedEvent& b) { return a.t_s < b.t_s; });
    std::vector<int> glyphs;
    for (const auto& e : sorted) glyphs.push_back(e.glyph);
    return letters(glyphs);
}

orchestrator::EpisodeInput NeedleEpisode::input() const {
    orchestrator::EpisodeInput in;
    in.source = std::make_shared<media::SyntheticSource>(video);
    in.subtitles = subtitles;
    in.query = query;
    in.candidates = candidates;
    in.correct = correct;
    return in;
}

policy::OracleKnowledge NeedleEpisode::knowledge() const { return {video.events, video.duration_s}; }

NeedleEpisode make_needle_episode(const NeedleSpec& spec) {
    const double T = spec.duration_s;
    if (!(T > 0.0)) throw ConfigError("needle duration must be positive");
    if (spec.events < 1 || spec.events > 26) throw ConfigError("needle events must lie in [1, 26]");
    if (!(spec.event_width_s > 0.0)) throw ConfigError("event width must be positive");
    const int cells = spec.k * spec.k;
    if (spec.disjoint && spec.events > cells) throw ConfigError("more disjoint events than root cells");

    std::mt19937_64 rng(spec.seed);
    NeedleEpisode ep;
    ep.spec = spec;
    ep.video.duration_s = T;
    ep.video.seed = spec.seed;
    ep.video.tile_px = spec.tile_px;

    // Keep every event's window inside its root cell and away from the ends.
    const double cell = T / cells;
    const double margin = std::min(0.25 * cell, std::max(spec.event_width_s, 0.01 * cell));
    std::vector<double> times;
    if (spec.disjoint) {
        std::vector<int> ids(static_cast<std::size_t>(cells));
        for (int i = 0; i < cells; ++i) ids[static_cast<std::size_t>(i)] = i;
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(static_cast<std::size_t>(spec.events));
        std::sort(ids.begin(), ids.end());
        for (int id : ids) times.push_back(uniform(rng, id * cell + margin, (id + 1) * cell - margin));
    } else {
        for (int i = 0; i < spec.events; ++i) {
            const int id = uniform_int(rng, 0, cells - 1);
            times.push_back(uniform(rng, id * cell + margin, (id + 1) * cell - margin));
        }
        std::sort(times.begin(), times.end());
    }
    const std::vector<int> glyphs = distinct_glyphs(rng, spec.events);
    for (std::size_t i = 0; i < times.size(); ++i) {
        media::PlantedEvent e;
        e.t_s = times[i];
        e.glyph = glyphs[i];
        e.color = kPalette[i % std::size(kPalette)];
        e.width_s = spec.event_width_s;
        ep.video.events.push_back(e);
    }
    ep.video.validate();

    const double every = spec.subtitle_every_s > 0.0 ? spec.subtitle_every_s : T / 64.0;
    int n = 0;
    for (double t = 0.0; t < T; t += every) {
        media::SubtitleCue cue;
        cue.index = ++n;
        cue.start_s = t;
        cue.end_s = std::min(T, t + std::min(every, 2.0));
        cue.text = fmt::format("Scene {}", n);
        ep.subtitles.push_back(cue);
    }

    ep.query = spec.events == 1 ? "Which glyph marker flashes up in this video?"
                                : "Which glyph markers flash up in this video? List them by time of appearance.";

    const std::string truth = glyph_sequence(ep.video.events);
    std::set<std::string> used{truth};
    std::vector<std::string> cands{truth};
    while (static_cast<int>(cands.size()) < spec.distractors + 1) {
        std::string alt = letters(distinct_glyphs(rng, spec.events));
        if (used.insert(alt).second) cands.push_back(alt);
    }
    std::shuffle(cands.begin(), cands.end(), rng);
    ep.candidates = cands;
    ep.correct = static_cast<int>(std::find(cands.begin(), cands.end(), truth) - cands.begin());
    return ep;
}

EpisodeResult run_oracle(const NeedleEpisode& ep, const EpisodeConfig& config) {
    policy::OraclePolicy oracle(ep.knowledge(), config.tokens);
    return orchestrator::run_episode(ep.input(), config, oracle);
}

bool localized(const NeedleEpisode& ep, const std::vector<EvidenceItem>& evidence) {
    for (const auto& e : ep.video.events) {
        const bool hit = std::any_of(evidence.begin(), evidence.end(), [&](const EvidenceItem& it) {
            return std::abs(it.timestamp_s - e.t_s) <= 0.5 * e.width_s + 1e-9 &&
                   policy::glyph_from_description(it.description) == e.glyph;
        });
        if (!hit) return false;
    }
    return true;
}

std::vector<std::pair<double, std::string>> evidence_set(const std::vector<EvidenceItem>& evidence) {
    std::vector<std::pair<double, std::string>> out;
    for (const auto& it : evidence) out.emplace_back(it.timestamp_s, it.description);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> placement_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

orchestrator::EpisodeInput TenHourEpisode::input() const {
    std::vector<std::shared_ptr<media::FrameSource>> sources;
    for (const auto& seg : segments) sources.push_back(std::make_shared<media::SyntheticSource>(seg));
    orchestrator::EpisodeInput in;
    in.source = std::make_shared<media::ConcatFrameSource>(layout, std::move(sources));
    in.subtitles = subtitles;
    in.query = query;
    in.candidates = candidates;
    in.correct = correct;
    return in;
}

policy::OracleKnowledge TenHourEpisode::knowledge() const { return {events, layout.total_s()}; }

TenHourEpisode make_ten_hour_episode(const TenHourSpec& spec) {
    const std::size_t n = spec.segment_durations.size();
    if (n == 0) throw ConfigError("10-hour variant needs at least one segment");
    if (spec.target_index >= n) throw ConfigError("target index out of range");

    TenHourEpisode ep;
    ep.spec = spec;
    const auto order = placement_order(n, spec.seed);
    std::vector<std::pair<std::string, double>> named;
    std::vector<media::SubtitleTrack> tracks;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t input = order[pos];
        NeedleSpec ns;
        ns.duration_s = spec.segment_durations[input];
        ns.seed = spec.seed * 1000003ULL + input;
        ns.events = std::max(1, spec.target_events);
        ns.event_width_s = spec.event_width_s;
        ns.k = spec.k;
        ns.tile_px = spec.tile_px;
        ns.distractors = spec.distractors;
        NeedleEpisode seg = make_needle_episode(ns);
        if (input != spec.target_index) {
            seg.video.events.clear();
        } else {
            ep.target_position = pos;
            ep.query = seg.query;
            ep.candidates = seg.candidates;
            ep.correct = seg.correct;
        }
        named.emplace_back(fmt::format("segment{}", input), seg.video.duration_s);
        ep.segments.push_back(seg.video);
        ep.segment_subtitles.push_back(seg.subtitles);
    }
    ep.layout = media::ConcatSource::from_durations(named);
    for (std::size_t pos = 0; pos < n; ++pos) {
        tracks.push_back({ep.segment_subtitles[pos], ep.layout.segments()[pos].offset_s});
        for (auto e : ep.segments[pos].events) {
            e.t_s = ep.layout.to_global(pos, e.t_s);
            ep.events.push_back(e);
        }
    }
    ep.subtitles = media::merge_subtitles(tracks);
    return ep;
}

TenHourSweep sweep_ten_hour(int episodes, std::uint64_t seed, const EpisodeConfig& config, int target_events) {
    if (episodes < 1) throw ConfigError("episodes must be positive");
    TenHourSweep out;
    for (int j = 0; j < episodes; ++j) {
        TenHourSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(j);
        spec.target_index = static_cast<std::size_t>(j) % spec.segment_durations.size();
        spec.target_events = target_events;
        spec.k = config.k;
        spec.tile_px = config.tile_px;
        const TenHourEpisode ep = make_ten_hour_episode(spec);
        policy::OraclePolicy oracle(ep.knowledge(), config.tokens);
        out.results.push_back(orchestrator::run_episode(ep.input(), config, oracle));
    }
    return out;
}

DurationSweep sweep_duration(const std::vector<double>& durations, int trials, std::uint64_t seed,
                             const EpisodeConfig& config, double event_width_s) {
    if (trials < 1) throw ConfigError("trials must be positive");
    DurationSweep out;
    for (double T : durations) {
        for (int i = 0; i < trials; ++i) {
            NeedleSpec spec;
            spec.duration_s = T;
            spec.seed = seed + static_cast<std::uint64_t>(i);
            spec.event_width_s = event_width_s;
            spec.k = config.k;
            spec.tile_px = config.tile_px;
            const NeedleEpisode ep = make_needle_episode(spec);
            DurationRun run{T, i, run_oracle(ep, config)};
            out.points.push_back({T, static_cast<double>(run.result.total_tokens),
                                  static_cast<double>(run.result.effective_tokens()), run.result.cache_hit_rate});
            out.runs.push_back(std::move(run));
        }
    }
    return out;
}

std::vector<WorkerRow> sweep_workers(std::vector<int> workers, int episodes, std::uint64_t seed, double duration_s,
                                     const EpisodeConfig& config) {
    if (episodes < 1) throw ConfigError("episodes must be positive");
    std::vector<int> unique;
    for (int w : workers) {
        if (w < 1) throw ConfigError("worker counts must be positive");
        if (std::find(unique.begin(), unique.end(), w) == unique.end()) unique.push_back(w);
    }
    std::vector<NeedleEpisode> eps;
    for (int j = 0; j < episodes; ++j) {
        NeedleSpec spec;
        spec.duration_s = duration_s;
        spec.seed = seed + static_cast<std::uint64_t>(j);
        spec.events = 3;
        spec.disjoint = true;
        spec.k = config.k;
        spec.tile_px = config.tile_px;
        eps.push_back(make_needle_episode(spec));
    }
    std::vector<std::vector<std::vector<std::pair<double, std::string>>>> sets;
    std::vector<WorkerRow> rows;
    for (int w : unique) {
        EpisodeConfig c = config;
        c.workers = w;
        WorkerRow row;
        row.workers = w;
        std::vector<std::vector<std::pair<double, std::string>>> mine;
        for (const auto& ep : eps) {
            const EpisodeResult r = run_oracle(ep, c);
            row.worker_steps += r.worker_steps;
            row.critical_path_steps += r.critical_path_steps;
            row.total_tokens += r.total_tokens;
            row.correct += r.correct.value_or(false) ? 1 : 0;
            ++row.episodes;
            mine.push_back(evidence_set(r.evidence));
        }
        if (!sets.empty()) row.same_evidence = mine == sets.front();
        sets.push_back(std::move(mine));
        rows.push_back(row);
    }
    return rows;
}

std::vector<DepthRow> sweep_depth(const std::vector<int>& max_depths, int episodes, std::uint64_t seed,
                                  double duration_s, double event_width_s, const EpisodeConfig& config) {
    if (episodes < 1) throw ConfigError("episodes must be positive");
    std::vector<DepthRow> rows;
    for (int cap : max_depths) {
        if (cap < 0) throw ConfigError("depth caps must not be negative");
        EpisodeConfig c = config;
        c.max_depth = cap;
        DepthRow row;
        row.max_depth = cap;
        double tokens = 0.0;
        int correct = 0;
        int found = 0;
        for (int j = 0; j < episodes; ++j) {
            NeedleSpec spec;
            spec.duration_s = duration_s;
            spec.seed = seed + static_cast<std::uint64_t>(j);
            spec.event_width_s = event_width_s;
            spec.k = c.k;
            spec.tile_px = c.tile_px;
            const NeedleEpisode ep = make_needle_episode(spec);
            const EpisodeResult r = run_oracle(ep, c);
            tokens += static_cast<double>(r.total_tokens);
            correct += r.correct.value_or(false) ? 1 : 0;
            found += localized(ep, r.evidence) ? 1 : 0;
        }
        row.episodes = episodes;
        row.accuracy = static_cast<double>(correct) / episodes;
        row.localization = static_cast<double>(found) / episodes;
        row.mean_tokens = tokens / episodes;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace atlas::bench
