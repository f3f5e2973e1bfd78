#include "videoatlas/env.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "videoatlas/hash.hpp"

namespace atlas::env {

namespace {

constexpr double kEps = 1e-9;

std::uint64_t hash_interval(std::uint64_t h, const Interval& iv) {
    return hash_double(hash_double(h, iv.start_s), iv.end_s);
}

// base minus the union of holes, as sorted disjoint pieces.
std::vector<Interval> subtract(const Interval& base, std::vector<Interval> holes) {
    std::sort(holes.begin(), holes.end(), [](const Interval& a, const Interval& b) { return a.start_s < b.start_s; });
    std::vector<Interval> out;
    double cursor = base.start_s;
    for (const auto& h : holes) {
        if (h.end_s <= cursor || h.start_s >= base.end_s) continue;
        if (h.start_s > cursor) out.push_back({cursor, std::min(h.start_s, base.end_s)});
        cursor = std::max(cursor, h.end_s);
        if (cursor >= base.end_s) break;
    }
    if (cursor < base.end_s) out.push_back({cursor, base.end_s});
    return out;
}

std::string kind_json_name(ActionKind k) { return to_string(k); }

}  // namespace

const char* to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Expand: return "EXPAND";
        case ActionKind::Backtrack: return "BACKTRACK";
        case ActionKind::MarkPromising: return "MARK_PROMISING";
        case ActionKind::Zoom: return "ZOOM";
        case ActionKind::Investigate: return "INVESTIGATE";
        case ActionKind::AddToScratchpad: return "ADD_TO_SCRATCHPAD";
        case ActionKind::Finished: return "FINISHED";
    }
    return "?";
}

const char* to_string(Mode mode) { return mode == Mode::BFS ? "BFS" : "DFS"; }

std::vector<ActionKind> ActionSet::kinds() const {
    std::vector<ActionKind> out;
    for (auto k : kAllActionKinds) {
        if (contains(k)) out.push_back(k);
    }
    return out;
}

nlohmann::json Action::to_json() const {
    nlohmann::json j;
    j["action"] = kind_json_name(kind);
    switch (kind) {
        case ActionKind::Expand:
        case ActionKind::Zoom:
            j["cell"] = cells.empty() ? -1 : cells.front();
            break;
        case ActionKind::Investigate:
            j["cell"] = cells.empty() ? -1 : cells.front();
            j["direction"] = direction == Direction::Before ? "before" : "after";
            break;
        case ActionKind::MarkPromising:
            j["cells"] = cells;
            break;
        case ActionKind::AddToScratchpad: {
            auto arr = nlohmann::json::array();
            for (const auto& it : items) {
                arr.push_back({{"timestamp", it.t_s}, {"description", it.description}, {"confidence", it.confidence}});
            }
            j["items"] = arr;
            break;
        }
        case ActionKind::Backtrack:
        case ActionKind::Finished:
            break;
    }
    return j;
}

// --- DeadZoneSet -----------------------------------------------------------------

void DeadZoneSet::add(const Interval& iv, int round) {
    if (!(iv.end_s > iv.start_s)) return;
    DeadZone merged{iv, round};
    std::vector<DeadZone> out;
    out.reserve(zones_.size() + 1);
    bool placed = false;
    for (const auto& z : zones_) {
        if (z.interval.end_s < merged.interval.start_s) {
            out.push_back(z);
        } else if (z.interval.start_s > merged.interval.end_s) {
            if (!placed) {
                out.push_back(merged);
                placed = true;
            }
            out.push_back(z);
        } else {
            merged.interval.start_s = std::min(merged.interval.start_s, z.interval.start_s);
            merged.interval.end_s = std::max(merged.interval.end_s, z.interval.end_s);
            merged.round_added = std::min(merged.round_added, z.round_added);
        }
    }
    if (!placed) out.push_back(merged);
    zones_ = std::move(out);
}

double DeadZoneSet::covered(const Interval& iv) const {
    auto it = std::lower_bound(zones_.begin(), zones_.end(), iv.start_s,
                               [](const DeadZone& z, double t) { return z.interval.end_s <= t; });
    double sum = 0.0;
    for (; it != zones_.end() && it->interval.start_s < iv.end_s; ++it) {
        sum += std::max(0.0, std::min(it->interval.end_s, iv.end_s) - std::max(it->interval.start_s, iv.start_s));
    }
    return sum;
}

double DeadZoneSet::coverage(const Interval& iv) const {
    const double w = iv.width();
    if (w <= 0.0) return 0.0;
    return covered(iv) / w;
}

double DeadZoneSet::measure() const {
    double sum = 0.0;
    for (const auto& z : zones_) sum += z.interval.width();
    return sum;
}

std::uint64_t DeadZoneSet::hash() const {
    std::uint64_t h = fnv1a("deadzones");
    for (const auto& z : zones_) h = hash_interval(h, z.interval);
    return h;
}

// --- Scratchpad -----------------------------------------------------------------------

std::string Scratchpad::add(EvidenceItem item) {
    item.label = render::label_for(next_++);
    items_.push_back(std::move(item));
    return items_.back().label;
}

void Scratchpad::prune(const std::vector<std::string>& labels) {
    for (const auto& l : labels) {
        const bool known =
            std::any_of(items_.begin(), items_.end(), [&](const EvidenceItem& it) { return it.label == l; });
        if (!known) throw UnknownLabelError(fmt::format("no scratchpad item labelled '{}'", l));
    }
    std::erase_if(items_, [&](const EvidenceItem& it) {
        return std::find(labels.begin(), labels.end(), it.label) != labels.end();
    });
}

// --- targets and regions ------------------------------------------------------------------

std::string Target::key() const {
    if (address) return address->to_string();
    return fmt::format("[{:.3f},{:.3f})", interval.start_s, interval.end_s);
}

Target cell_target(const VideoSpan& span, const CellAddress& addr) {
    return {timeline::cell_interval(span, addr), addr.depth(), addr};
}

Interval Region::owned() const {
    if (focus) return timeline::child_interval(grid, k, *focus);
    return grid;
}

std::optional<CellAddress> EnvState::address() const {
    if (!region.address || region.focus) return std::nullopt;
    CellAddress a = *region.address;
    for (int c : nav_stack) a = a.child(c);
    return a;
}

std::uint64_t EnvState::hash() const {
    std::uint64_t h = fnv1a("envstate");
    h = hash_interval(h, position);
    h = hash_combine(h, static_cast<std::uint64_t>(depth));
    h = hash_interval(h, region.grid);
    h = hash_combine(h, static_cast<std::uint64_t>(region.focus.value_or(-1) + 1));
    for (int c : nav_stack) h = hash_combine(h, static_cast<std::uint64_t>(c));
    h = hash_combine(h, 0xfeedULL);
    for (const auto& it : scratchpad.items()) {
        h = fnv1a(it.label, h);
        h = hash_double(h, it.timestamp_s);
        h = hash_double(h, it.confidence);
        h = fnv1a(it.description, h);
    }
    h = hash_combine(h, dead_zones.hash());
    for (double t : protected_timestamps) h = hash_double(h, t);
    for (const auto& p : promising) h = fnv1a(p.key(), h);
    h = hash_combine(h, static_cast<std::uint64_t>(config.mode == Mode::BFS));
    h = hash_combine(h, static_cast<std::uint64_t>(finished));
    return h;
}

std::uint64_t StepResult::hash() const {
    std::uint64_t h = fnv1a(to_string(kind));
    if (observation) h = hash_combine(h, observation->grid_key);
    if (frame) h = hash_combine(h, content_hash(frame->raster()));
    if (strip) h = hash_combine(h, content_hash(strip->raster()));
    for (const auto& l : labels) h = fnv1a(l, h);
    for (const auto& p : promising) h = fnv1a(p.key(), h);
    for (const auto& d : dead_zones) h = hash_interval(h, d);
    h = hash_combine(h, static_cast<std::uint64_t>(terminal));
    return h;
}

std::string format_seconds(double t, double cell_span_s) {
    if (cell_span_s >= 1.0) return fmt::format("{:.1f}s", t);
    if (cell_span_s >= 0.1) return fmt::format("{:.2f}s", t);
    return fmt::format("{:.3f}s", t);
}

// --- Environment ----------------------------------------------------------------------------

Environment::Environment(std::shared_ptr<media::FrameSource> source, std::vector<SubtitleCue> subtitles,
                         EnvConfig config)
    : source_(std::move(source)), subtitles_(std::move(subtitles)), config_(config) {
    if (!source_) throw EnvironmentError("environment needs a frame source");
    if (config_.k < 2) throw ConfigError(fmt::format("grid size K={} must be at least 2", config_.k));
    if (config_.blackout_theta <= 0.0 || config_.blackout_theta > 1.0) {
        throw ConfigError("blackout threshold must lie in (0, 1]");
    }
    span_ = source_->span();
    if (!(span_.duration_s > 0.0)) throw MediaError("source reports a non-positive duration");
    std::stable_sort(subtitles_.begin(), subtitles_.end(),
                     [](const SubtitleCue& a, const SubtitleCue& b) { return a.start_s < b.start_s; });
}

EnvState Environment::init_state() const {
    EnvState s;
    s.video = span_;
    s.config = config_;
    s.region = Region{timeline::root_interval(span_), 0, CellAddress(config_.k), std::nullopt, config_.k};
    s.position = s.region.grid;
    s.depth = 0;
    return s;
}

std::pair<EnvState, ObservationPtr> Environment::init_env() {
    EnvState s = init_state();
    auto obs = observe(s);
    return {std::move(s), std::move(obs)};
}

EnvState Environment::worker_state(const Target& target, const DeadZoneSet& dead,
                                   std::vector<double> protected_timestamps, Mode mode, int round) const {
    EnvState s;
    s.video = span_;
    s.config = config_;
    s.config.mode = mode;
    if (target.depth <= config_.max_depth) {
        s.region = Region{target.interval, target.depth, target.address, std::nullopt, config_.k};
    } else if (target.address && !target.address->is_root() && target.depth - 1 <= config_.max_depth) {
        const CellAddress parent = target.address->parent();
        s.region = Region{timeline::cell_interval(span_, parent), parent.depth(), parent, target.address->last(),
                          config_.k};
    } else if (!target.address) {
        s.region = Region{target.interval, config_.max_depth, std::nullopt, std::nullopt, config_.k};
    } else {
        throw InvalidActionError(fmt::format("target {} lies below the depth budget", target.key()));
    }
    s.position = s.region.grid;
    s.depth = s.region.depth;
    s.dead_zones = dead;
    s.protected_timestamps = std::move(protected_timestamps);
    s.round = round;
    return s;
}

ActionSet Environment::available_actions(const EnvState& s) const {
    ActionSet a;
    if (s.finished) return a;
    const bool span_ok = s.cell_span_s() >= s.config.expand_floor_s - kEps;
    if (span_ok && s.depth + 1 <= s.config.max_depth && !s.region.focus) a.insert(ActionKind::Expand);
    if (!s.nav_stack.empty()) a.insert(ActionKind::Backtrack);
    if (s.config.mode == Mode::BFS) a.insert(ActionKind::MarkPromising);
    a.insert(ActionKind::Zoom);
    a.insert(ActionKind::Investigate);
    a.insert(ActionKind::AddToScratchpad);
    a.insert(ActionKind::Finished);
    return a;
}

std::vector<CellDescriptor> Environment::describe_cells(const EnvState& s) const {
    const int n = s.config.k * s.config.k;
    std::vector<CellDescriptor> cells;
    cells.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        CellDescriptor c;
        c.index = i;
        c.interval = timeline::child_interval(s.position, s.config.k, i);
        c.midpoint_s = c.interval.midpoint();
        c.blacked = s.dead_zones.coverage(c.interval) >= s.config.blackout_theta - kEps;
        c.in_scope = !s.region.focus || *s.region.focus == i;
        cells.push_back(c);
    }
    return cells;
}

render::GridImage Environment::render_cells(const std::vector<CellDescriptor>& cells) {
    const int k = config_.k;
    const double cell_span = cells.empty() ? 0.0 : cells.front().interval.width();
    std::vector<render::GridTile> tiles;
    tiles.reserve(cells.size());
    for (const auto& c : cells) {
        render::GridTile t;
        t.interval = c.interval;
        t.dead = c.blacked;
        t.label = fmt::format("{} @{}", c.index, format_seconds(c.midpoint_s, cell_span));
        if (!c.blacked) t.frame = source_->frame_at(c.midpoint_s).pixels;
        tiles.push_back(std::move(t));
    }
    return render::compose_grid(k, config_.tile_px, tiles);
}

ObservationPtr Environment::observe(const EnvState& s) {
    auto obs = std::make_shared<Observation>();
    obs->cells = describe_cells(s);
    obs->subtitles = media::cues_in_window(subtitles_, s.position);
    obs->available = available_actions(s);
    obs->depth = s.depth;
    obs->position = s.position;
    obs->cell_span_s = s.cell_span_s();

    std::uint64_t key = hash_interval(fnv1a("grid"), s.position);
    for (const auto& c : obs->cells) key = hash_combine(key, c.blacked ? 1u : 0u);
    obs->grid_key = key;
    {
        std::lock_guard lock(cache_mu_);
        for (auto it = grid_cache_.begin(); it != grid_cache_.end(); ++it) {
            if (it->first == key) {
                grid_cache_.splice(grid_cache_.begin(), grid_cache_, it);
                obs->grid = it->second;
                return obs;
            }
        }
    }
    obs->grid = render_cells(obs->cells);
    std::lock_guard lock(cache_mu_);
    grid_cache_.emplace_front(key, obs->grid);
    if (grid_cache_.size() > kGridCacheSize) grid_cache_.pop_back();
    return obs;
}

const CellDescriptor& Environment::checked_cell(const EnvState& s, const std::vector<CellDescriptor>& cells,
                                                int idx) const {
    const int n = s.config.k * s.config.k;
    if (idx < 0 || idx >= n) throw AddressError(fmt::format("cell {} outside [0, {}]", idx, n - 1));
    const auto& c = cells[static_cast<std::size_t>(idx)];
    if (!c.in_scope) throw InvalidActionError(fmt::format("cell {} is outside this worker's assignment", idx));
    if (c.blacked) throw DeadCellError(fmt::format("cell {} is blacked out", idx));
    return c;
}

EvidenceItem Environment::make_evidence(const EvidenceDraft& d) {
    EvidenceItem item;
    item.timestamp_s = d.t_s;
    item.confidence = std::clamp(d.confidence, 0.0, 1.0);
    item.description = d.description;
    item.image = make_image(source_->frame_at(d.t_s).pixels);
    for (const auto& cue : media::cues_in_window(subtitles_, {d.t_s, d.t_s + 1e-6})) {
        if (!item.subtitle.empty()) item.subtitle += '\n';
        item.subtitle += cue.text;
    }
    return item;
}

StepResult Environment::step(EnvState& s, const Action& a) {
    const ActionSet avail = available_actions(s);
    if (!avail.contains(a.kind)) {
        throw InvalidActionError(fmt::format("{} is not available in this state", to_string(a.kind)));
    }
    StepResult r;
    r.kind = a.kind;
    const auto cells = describe_cells(s);

    auto single_cell = [&]() -> const CellDescriptor& {
        if (a.cells.size() != 1) {
            throw InvalidActionError(fmt::format("{} takes exactly one cell", to_string(a.kind)));
        }
        return checked_cell(s, cells, a.cells.front());
    };

    switch (a.kind) {
        case ActionKind::Expand: {
            const auto& c = single_cell();
            s.nav_stack.push_back(c.index);
            s.depth += 1;
            s.position = c.interval;
            r.observation = observe(s);
            r.summary = fmt::format("expanded cell {} -> {}", c.index, timeline::to_string(c.interval));
            break;
        }
        case ActionKind::Backtrack: {
            s.nav_stack.pop_back();
            s.depth -= 1;
            s.position = position_for(s.region, s.nav_stack);
            r.observation = observe(s);
            r.summary = fmt::format("back to {}", timeline::to_string(s.position));
            break;
        }
        case ActionKind::MarkPromising: {
            if (a.cells.empty()) throw InvalidActionError("MARK_PROMISING needs at least one cell");
            for (int idx : a.cells) checked_cell(s, cells, idx);
            for (int idx : a.cells) {
                const auto& c = cells[static_cast<std::size_t>(idx)];
                Target t;
                t.interval = c.interval;
                t.depth = s.depth + 1;
                if (s.region.address) {
                    CellAddress addr = *s.region.address;
                    for (int p : s.nav_stack) addr = addr.child(p);
                    t.address = addr.child(idx);
                }
                s.promising.push_back(t);
                r.promising.push_back(t);
            }
            r.summary = fmt::format("queued {} cell(s)", a.cells.size());
            break;
        }
        case ActionKind::Zoom: {
            const auto& c = single_cell();
            r.frame_t = c.midpoint_s;
            r.frame = make_image(source_->frame_at(c.midpoint_s).pixels);
            r.summary = fmt::format("frame at {}", format_seconds(c.midpoint_s, 0.0));
            break;
        }
        case ActionKind::Investigate: {
            const auto& c = single_cell();
            const double w = c.interval.width();
            Interval win = a.direction == Direction::Before
                               ? Interval{std::max(0.0, c.interval.start_s - w), c.interval.start_s}
                               : Interval{c.interval.end_s, std::min(span_.duration_s, c.interval.end_s + w)};
            // Nothing before the first or after the last moment: scan the cell itself.
            if (win.width() <= 0.0) win = c.interval;
            const int k = s.config.k;
            std::vector<render::GridTile> tiles;
            for (int i = 0; i < k; ++i) {
                const Interval part{win.start_s + win.width() * i / k, win.start_s + win.width() * (i + 1) / k};
                render::GridTile t;
                t.interval = part;
                t.dead = s.dead_zones.coverage(part) >= s.config.blackout_theta - kEps;
                const double tm = part.midpoint();
                t.label = format_seconds(tm, part.width());
                if (!t.dead) t.frame = source_->frame_at(tm).pixels;
                tiles.push_back(std::move(t));
            }
            r.strip = render::compose_strip(s.config.tile_px, tiles);
            r.summary = fmt::format("context {} {}", a.direction == Direction::Before ? "before" : "after",
                                    timeline::to_string(win));
            break;
        }
        case ActionKind::AddToScratchpad: {
            if (a.items.empty()) throw InvalidActionError("ADD_TO_SCRATCHPAD needs at least one item");
            for (const auto& d : a.items) {
                if (!(d.t_s >= 0.0 && d.t_s < span_.duration_s)) {
                    throw InvalidActionError(fmt::format("evidence timestamp {} outside the video", d.t_s));
                }
            }
            for (const auto& d : a.items) {
                r.labels.push_back(s.scratchpad.add(make_evidence(d)));
            }
            r.summary = fmt::format("added {} item(s)", r.labels.size());
            break;
        }
        case ActionKind::Finished: {
            std::vector<Interval> keep;
            const double g = s.config.evidence_guard_s;
            for (const auto& it : s.scratchpad.items()) keep.push_back({it.timestamp_s - g, it.timestamp_s + g});
            for (double t : s.protected_timestamps) keep.push_back({t - g, t + g});
            r.dead_zones = subtract(s.region.owned(), std::move(keep));
            for (const auto& d : r.dead_zones) s.dead_zones.add(d, s.round);
            s.finished = true;
            r.terminal = true;
            r.summary = fmt::format("finished; {} dead interval(s)", r.dead_zones.size());
            break;
        }
    }
    return r;
}

Interval Environment::position_for(const Region& r, const std::vector<int>& stack) const {
    Interval iv = r.grid;
    for (int c : stack) iv = timeline::child_interval(iv, r.k, c);
    return iv;
}

void Environment::add_dead_zone(EnvState& s, const Interval& iv, int round) const {
    const Interval clipped{std::max(0.0, iv.start_s), std::min(span_.duration_s, iv.end_s)};
    s.dead_zones.add(clipped, round);
}

void Environment::prune_evidence(EnvState& s, const std::vector<std::string>& labels) const {
    s.scratchpad.prune(labels);
}

}  // namespace atlas::env
