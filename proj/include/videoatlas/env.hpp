#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "videoatlas/error.hpp"
#include "videoatlas/evidence.hpp"
#include "videoatlas/media.hpp"
#include "videoatlas/render.hpp"
#include "videoatlas/timeline.hpp"

namespace atlas::env {

using media::SubtitleCue;
using timeline::CellAddress;
using timeline::Interval;
using timeline::VideoSpan;

enum class ActionKind : std::uint8_t {
    Expand,
    Backtrack,
    MarkPromising,
    Zoom,
    Investigate,
    AddToScratchpad,
    Finished,
};

inline constexpr ActionKind kAllActionKinds[] = {
    ActionKind::Expand, ActionKind::Backtrack,       ActionKind::MarkPromising, ActionKind::Zoom,
    ActionKind::Investigate, ActionKind::AddToScratchpad, ActionKind::Finished,
};

/// Wire name, e.g. "ADD_TO_SCRATCHPAD".
const char* to_string(ActionKind kind);

enum class Direction { Before, After };
enum class Mode { DFS, BFS };

const char* to_string(Mode mode);

class ActionSet {
public:
    ActionSet() = default;
    ActionSet(std::initializer_list<ActionKind> kinds) {
        for (auto k : kinds) insert(k);
    }

    bool contains(ActionKind k) const { return bits_ & bit(k); }
    void insert(ActionKind k) { bits_ |= bit(k); }
    void erase(ActionKind k) { bits_ &= static_cast<std::uint8_t>(~bit(k)); }
    std::vector<ActionKind> kinds() const;

    friend bool operator==(const ActionSet&, const ActionSet&) = default;

private:
    static std::uint8_t bit(ActionKind k) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
    std::uint8_t bits_ = 0;
};

struct Action {
    ActionKind kind = ActionKind::Finished;
    std::vector<int> cells;
    Direction direction = Direction::After;
    std::vector<EvidenceDraft> items;

    static Action expand(int cell) { return {ActionKind::Expand, {cell}, Direction::After, {}}; }
    static Action backtrack() { return {ActionKind::Backtrack, {}, Direction::After, {}}; }
    static Action mark_promising(std::vector<int> cells) {
        return {ActionKind::MarkPromising, std::move(cells), Direction::After, {}};
    }
    static Action zoom(int cell) { return {ActionKind::Zoom, {cell}, Direction::After, {}}; }
    static Action investigate(int cell, Direction d) { return {ActionKind::Investigate, {cell}, d, {}}; }
    static Action add(std::vector<EvidenceDraft> items) {
        return {ActionKind::AddToScratchpad, {}, Direction::After, std::move(items)};
    }
    static Action finished() { return {ActionKind::Finished, {}, Direction::After, {}}; }

    /// {"action": "EXPAND", "cell": 12} and friends; the same shape the
    /// worker-action parser accepts.
    nlohmann::json to_json() const;

    friend bool operator==(const Action&, const Action&) = default;
};

struct DeadZone {
    Interval interval;
    int round_added = 0;
};

/// Negative memory: disjoint, sorted, merged intervals.
class DeadZoneSet {
public:
    void add(const Interval& iv, int round);
    /// Measure of `iv` covered by dead zones.
    double covered(const Interval& iv) const;
    /// covered(iv) / width(iv).
    double coverage(const Interval& iv) const;
    double measure() const;
    const std::vector<DeadZone>& zones() const { return zones_; }
    bool empty() const { return zones_.empty(); }
    std::uint64_t hash() const;
    /// Test-only escape hatch; navigation never shrinks negative memory.
    void reset_for_testing() { zones_.clear(); }

private:
    std::vector<DeadZone> zones_;
};

class UnknownLabelError : public Error {
public:
    using Error::Error;
};

/// Positive memory. Labels come from a monotone counter and are never reused.
class Scratchpad {
public:
    std::string add(EvidenceItem item);
    /// Removes the named items; throws UnknownLabelError (and removes nothing)
    /// if any label is unknown.
    void prune(const std::vector<std::string>& labels);
    const std::vector<EvidenceItem>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    std::size_t labels_issued() const { return next_; }

private:
    std::vector<EvidenceItem> items_;
    std::size_t next_ = 0;
};

inline constexpr int kUnlimitedDepth = std::numeric_limits<int>::max() / 2;

struct EnvConfig {
    int k = 8;
    int tile_px = media::kDefaultTilePx;
    double expand_floor_s = 1.0;
    int max_depth = kUnlimitedDepth;
    double blackout_theta = 0.95;
    double evidence_guard_s = 0.5;
    Mode mode = Mode::DFS;
};

/// Something a worker can be rooted at: an aligned grid cell, or an arbitrary
/// interval (a "pseudo-cell") requested by the Master.
struct Target {
    Interval interval;
    int depth = 1;  // depth of the grid a worker rooted here observes
    std::optional<CellAddress> address;

    std::string key() const;
    friend bool operator==(const Target&, const Target&) = default;
};

Target cell_target(const VideoSpan& span, const CellAddress& addr);

/// The part of the video one environment instance is rooted at.
struct Region {
    Interval grid;  // interval shown when the navigation stack is empty
    int depth = 0;
    std::optional<CellAddress> address;
    /// Restricts cell arguments to one cell of the root grid (used when the
    /// depth budget forbids descending into the assigned cell).
    std::optional<int> focus;
    int k = 8;

    /// Interval the region is responsible for: the grid, or the focus cell.
    Interval owned() const;
};

/// Full MDP state: position (center, span), depth, M+, M-, navigation stack.
struct EnvState {
    VideoSpan video;
    EnvConfig config;
    Region region;
    std::vector<int> nav_stack;
    Interval position;
    int depth = 0;
    Scratchpad scratchpad;
    DeadZoneSet dead_zones;
    /// Evidence timestamps committed outside this state; Finished never blacks them.
    std::vector<double> protected_timestamps;
    std::deque<Target> promising;
    bool finished = false;
    int round = 0;

    double center_s() const { return position.midpoint(); }
    double span_s() const { return position.width(); }
    double cell_span_s() const { return position.width() / (config.k * config.k); }
    /// Address of the current position when the region is grid-aligned.
    std::optional<CellAddress> address() const;
    std::uint64_t hash() const;
};

struct CellDescriptor {
    int index = 0;
    Interval interval;
    double midpoint_s = 0.0;
    bool blacked = false;
    bool in_scope = true;
};

struct Observation {
    render::GridImage grid;
    std::uint64_t grid_key = 0;  // identifies the rendered pixels
    std::vector<CellDescriptor> cells;
    std::vector<SubtitleCue> subtitles;
    ActionSet available;
    int depth = 0;
    Interval position;
    double cell_span_s = 0.0;
};

using ObservationPtr = std::shared_ptr<const Observation>;

struct StepResult {
    ActionKind kind = ActionKind::Finished;
    ObservationPtr observation;         // Expand, Backtrack
    ImagePtr frame;                     // Zoom
    double frame_t = 0.0;
    std::optional<render::GridImage> strip;  // Investigate
    std::vector<std::string> labels;    // AddToScratchpad
    std::vector<Target> promising;      // MarkPromising
    std::vector<Interval> dead_zones;   // Finished
    bool terminal = false;
    std::string summary;                // one line, engine-generated

    std::uint64_t hash() const;
};

/// The environment: dynamics over EnvState values for one video.
class Environment {
public:
    Environment(std::shared_ptr<media::FrameSource> source, std::vector<SubtitleCue> subtitles, EnvConfig config);

    const VideoSpan& span() const { return span_; }
    const EnvConfig& config() const { return config_; }
    media::FrameSource& source() const { return *source_; }
    const std::vector<SubtitleCue>& subtitles() const { return subtitles_; }

    /// Root state (empty path, depth 0, empty memories, empty stack).
    EnvState init_state() const;
    std::pair<EnvState, ObservationPtr> init_env();

    /// State rooted at `target` carrying a snapshot of global memory. When the
    /// target lies below config().max_depth the worker is placed on the parent
    /// grid with its cell as focus.
    EnvState worker_state(const Target& target, const DeadZoneSet& dead, std::vector<double> protected_timestamps,
                          Mode mode, int round) const;

    ActionSet available_actions(const EnvState& s) const;
    ObservationPtr observe(const EnvState& s);

    /// Applies `a` in place. Throws InvalidActionError for an unavailable kind
    /// or out-of-scope argument, DeadCellError for a blacked cell argument,
    /// AddressError for an index outside [0, K^2).
    StepResult step(EnvState& s, const Action& a);

    void add_dead_zone(EnvState& s, const Interval& iv, int round) const;
    void prune_evidence(EnvState& s, const std::vector<std::string>& labels) const;

    /// Cells of the current grid with interval, midpoint, blackout and scope.
    std::vector<CellDescriptor> describe_cells(const EnvState& s) const;

    /// Evidence item for a committed draft: frame at t plus aligned subtitle.
    EvidenceItem make_evidence(const EvidenceDraft& d);

private:
    Interval position_for(const Region& r, const std::vector<int>& stack) const;
    const CellDescriptor& checked_cell(const EnvState& s, const std::vector<CellDescriptor>& cells, int idx) const;
    render::GridImage render_cells(const std::vector<CellDescriptor>& cells);

    std::shared_ptr<media::FrameSource> source_;
    std::vector<SubtitleCue> subtitles_;
    EnvConfig config_;
    VideoSpan span_;

    // Small LRU of rendered grids keyed by (cells, blackout mask).
    std::mutex cache_mu_;
    std::list<std::pair<std::uint64_t, render::GridImage>> grid_cache_;
    static constexpr std::size_t kGridCacheSize = 6;
};

std::string format_seconds(double t, double cell_span_s);

}  // namespace atlas::env
