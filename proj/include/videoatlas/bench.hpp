#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "videoatlas/media.hpp"
#include "videoatlas/metrics.hpp"
#include "videoatlas/orchestrator.hpp"
#include "videoatlas/policy.hpp"

namespace atlas::bench {

struct NeedleSpec {
    double duration_s = 600.0;
    std::uint64_t seed = 0;
    int events = 1;
    double event_width_s = 1.0;
    /// Events in distinct root cells, in increasing time order.
    bool disjoint = false;
    int k = 8;
    int tile_px = media::kDefaultTilePx;
    int distractors = 3;  // wrong candidates
    double subtitle_every_s = 0.0;  // 0: about 64 cues per video
};

/// One synthetic question: a video with planted glyph events and a
/// multiple-choice question whose answer is the glyph sequence.
struct NeedleEpisode {
    NeedleSpec spec;
    media::SyntheticVideoSpec video;
    std::vector<media::SubtitleCue> subtitles;
    std::string query;
    std::vector<std::string> candidates;
    int correct = 0;

    orchestrator::EpisodeInput input() const;
    policy::OracleKnowledge knowledge() const;
};

NeedleEpisode make_needle_episode(const NeedleSpec& spec);

/// "A, K, Q"
std::string glyph_sequence(const std::vector<media::PlantedEvent>& events);

/// Runs the episode against a fresh oracle.
orchestrator::EpisodeResult run_oracle(const NeedleEpisode& ep, const orchestrator::EpisodeConfig& config);

/// Every planted event has an evidence item within its visibility window
/// naming its glyph.
bool localized(const NeedleEpisode& ep, const std::vector<EvidenceItem>& evidence);

// --- 10-hour variant ---------------------------------------------------------------

struct TenHourSpec {
    std::vector<double> segment_durations = std::vector<double>(10, 3600.0);
    std::size_t target_index = 0;  // which input segment carries the question
    int target_events = 3;
    double event_width_s = 1.0;
    std::uint64_t seed = 0;
    int k = 8;
    int tile_px = media::kDefaultTilePx;
    int distractors = 3;
};

/// Synthetic segments concatenated in a seeded random order; only the target
/// segment holds planted events.
struct TenHourEpisode {
    TenHourSpec spec;
    media::ConcatSource layout;
    std::vector<media::SyntheticVideoSpec> segments;  // layout order
    std::size_t target_position = 0;                 // index into layout
    std::vector<media::PlantedEvent> events;          // global times
    std::vector<media::SubtitleCue> subtitles;        // merged
    std::vector<std::vector<media::SubtitleCue>> segment_subtitles;  // local times, layout order
    std::string query;
    std::vector<std::string> candidates;
    int correct = 0;

    orchestrator::EpisodeInput input() const;
    policy::OracleKnowledge knowledge() const;
};

TenHourEpisode make_ten_hour_episode(const TenHourSpec& spec);

/// Seeded shuffle of n inputs; returns input indices in layout order.
std::vector<std::size_t> placement_order(std::size_t n, std::uint64_t seed);

// --- sweeps --------------------------------------------------------------------------

struct DurationRun {
    double duration_s = 0.0;
    int trial = 0;
    orchestrator::EpisodeResult result;
};

struct DurationSweep {
    std::vector<DurationRun> runs;
    std::vector<metrics::ScalingPoint> points;  // one per run
};

/// Oracle episodes per duration with one planted event each. Trial i of every
/// duration uses seed `seed + i`.
DurationSweep sweep_duration(const std::vector<double>& durations, int trials, std::uint64_t seed,
                             const orchestrator::EpisodeConfig& config, double event_width_s = 1.0);

struct WorkerRow {
    int workers = 0;
    long long worker_steps = 0;
    long long critical_path_steps = 0;
    long long total_tokens = 0;
    int correct = 0;
    int episodes = 0;
    bool same_evidence = true;  // evidence sets equal to the first W in the list
};

/// Same disjoint three-event episodes for each W (deduplicated, order kept).
std::vector<WorkerRow> sweep_workers(std::vector<int> workers, int episodes, std::uint64_t seed, double duration_s,
                                     const orchestrator::EpisodeConfig& config);

struct DepthRow {
    int max_depth = 0;
    double accuracy = 0.0;   // fraction answered correctly
    double localization = 0.0;  // fraction with every event localized
    double mean_tokens = 0.0;
    int episodes = 0;
};

std::vector<DepthRow> sweep_depth(const std::vector<int>& max_depths, int episodes, std::uint64_t seed,
                                  double duration_s, double event_width_s, const orchestrator::EpisodeConfig& config);

struct TenHourSweep {
    std::vector<orchestrator::EpisodeResult> results;
};

/// 10-hour variant episodes, target segment rotating through the inputs.
TenHourSweep sweep_ten_hour(int episodes, std::uint64_t seed, const orchestrator::EpisodeConfig& config,
                            int target_events = 3);

/// Canonical evidence fingerprint: (timestamp, description) pairs sorted.
std::vector<std::pair<double, std::string>> evidence_set(const std::vector<EvidenceItem>& evidence);

}  // namespace atlas::bench
