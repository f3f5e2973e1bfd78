#include "videoatlas/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <ostream>
#include <fmt/format.h>

#include "videoatlas/error.hpp"
#include "videoatlas/hash.hpp"
#include "videoatlas/parsers.hpp"
#include "videoatlas/templates.hpp"

namespace atlas::orchestrator {

using nlohmann::json;
using policy::PolicyRequest;
using policy::PolicyResponse;
using policy::Role;

namespace {

constexpr double kEps = 1e-9;

std::string seconds(double t) { return fmt::format("{:.1f}", t); }

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string clip_raw(const std::string& s) { return s.size() <= 200 ? s : s.substr(0, 200) + "..."; }

// JSON can't hold invalid UTF-8; model output is untrusted.
std::string printable(const std::string& s) {
    std::string out;
    for (unsigned char c : s) out.push_back(c < 0x80 ? static_cast<char>(c) : '?');
    return out;
}

json cells_json(const std::vector<env::CellDescriptor>& cells) {
    json arr = json::array();
    for (const auto& c : cells) {
        arr.push_back({{"id", c.index},
                       {"start", c.interval.start_s},
                       {"end", c.interval.end_s},
                       {"blacked", c.blacked},
                       {"in_scope", c.in_scope}});
    }
    return arr;
}

bool is_blacked(const env::DeadZoneSet& dead, const Interval& iv, double theta) {
    return dead.coverage(iv) >= theta - kEps;
}

}  // namespace

const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::None: return "None";
        case StopReason::WorkerBudget: return "WorkerBudget";
        case StopReason::Sufficiency: return "Sufficiency";
        case StopReason::GlobalBudget: return "GlobalBudget";
    }
    return "?";
}

const char* to_string(Traversal t) {
    switch (t) {
        case Traversal::Auto: return "auto";
        case Traversal::DFS: return "dfs";
        case Traversal::BFS: return "bfs";
    }
    return "?";
}

// --- config ---------------------------------------------------------------------------

void EpisodeConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(k >= 2, "k must be at least 2");
    require(tile_px >= 16, "tile_px must be at least 16");
    require(workers >= 1, "workers must be positive");
    require(top_n >= 1, "top_n must be positive");
    require(dfs_budget >= 1, "dfs_budget must be positive");
    require(bfs_budget >= 1, "bfs_budget must be positive");
    require(max_rounds >= 0, "max_rounds must not be negative");
    require(global_token_budget >= 0, "global_token_budget must not be negative");
    require(blackout_theta > 0.0 && blackout_theta <= 1.0, "blackout_theta must lie in (0, 1]");
    require(expand_floor_s > 0.0, "expand_floor_s must be positive");
    require(evidence_guard_s >= 0.0, "evidence_guard_s must not be negative");
    require(virtual_loss >= 0.0, "virtual_loss must not be negative");
    require(max_suggestions >= 1, "max_suggestions must be positive");
    require(!max_depth || *max_depth >= 0, "max_depth must not be negative");
    require(cache_block_tokens >= 1, "cache_block_tokens must be positive");
    tokens.validate();
}

int EpisodeConfig::resolved_max_depth(const timeline::VideoSpan& span) const {
    return max_depth.value_or(timeline::sub_second_depth(span, k));
}

env::EnvConfig EpisodeConfig::env_config(const timeline::VideoSpan& span) const {
    env::EnvConfig c;
    c.k = k;
    c.tile_px = tile_px;
    c.expand_floor_s = expand_floor_s;
    c.max_depth = resolved_max_depth(span);
    c.blackout_theta = blackout_theta;
    c.evidence_guard_s = evidence_guard_s;
    return c;
}

// --- frontier -----------------------------------------------------------------------------

void FrontierQueue::push(const Target& t, double priority) {
    if (!std::isfinite(priority)) throw Error("frontier priority must be finite");
    const std::string key = t.key();
    for (auto& e : entries_) {
        if (e.target.key() == key) {
            e.priority = priority;
            return;
        }
    }
    entries_.push_back({t, priority, 0, next_seq_++});
}

std::vector<Target> FrontierQueue::assign(int w) {
    std::vector<Entry*> open;
    for (auto& e : entries_) {
        if (e.virtual_loss == 0) open.push_back(&e);
    }
    std::stable_sort(open.begin(), open.end(), [&](const Entry* a, const Entry* b) {
        const double pa = a->priority - lambda_ * a->virtual_loss;
        const double pb = b->priority - lambda_ * b->virtual_loss;
        if (pa != pb) return pa > pb;
        return a->seq < b->seq;
    });
    std::vector<Target> out;
    for (auto* e : open) {
        if (static_cast<int>(out.size()) >= w) break;
        e->virtual_loss += 1;
        out.push_back(e->target);
    }
    return out;
}

void FrontierQueue::complete(const std::string& key) {
    std::erase_if(entries_, [&](const Entry& e) { return e.target.key() == key; });
}

void FrontierQueue::remove_if_blacked(const env::DeadZoneSet& dead, double theta) {
    std::erase_if(entries_, [&](const Entry& e) {
        return e.virtual_loss == 0 && is_blacked(dead, e.target.interval, theta);
    });
}

double FrontierQueue::effective_priority(const std::string& key) const {
    for (const auto& e : entries_) {
        if (e.target.key() == key) return e.priority - lambda_ * e.virtual_loss;
    }
    throw Error(fmt::format("no frontier entry '{}'", key));
}

// --- traces --------------------------------------------------------------------------------

json TraceRecord::to_json() const {
    return json{{"step", step},
                {"round", round},
                {"actor", actor},
                {"action", action},
                {"args", args},
                {"tokens_in", tokens_in},
                {"tokens_out", tokens_out},
                {"state_hash", to_hex(state_hash)},
                {"result_hash", to_hex(result_hash)}};
}

void write_trace_jsonl(std::ostream& out, const std::vector<TraceRecord>& records) {
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

json EpisodeResult::report_json() const {
    json ev = json::array();
    for (const auto& e : evidence) {
        ev.push_back({{"label", e.label},
                      {"timestamp_s", e.timestamp_s},
                      {"confidence", e.confidence},
                      {"description", printable(e.description)},
                      {"subtitle", printable(e.subtitle)}});
    }
    return json{{"answer", answer ? json(*answer) : json(nullptr)},
                {"correct", correct ? json(*correct) : json(nullptr)},
                {"rounds", rounds},
                {"stop_reason", to_string(stop_reason)},
                {"master_tokens", master_tokens},
                {"worker_tokens", worker_tokens},
                {"total_tokens", total_tokens},
                {"effective_tokens", effective_tokens()},
                {"cache_hit_rate", cache_hit_rate},
                {"evidence_count", static_cast<int>(evidence.size())},
                {"worker_steps", worker_steps},
                {"critical_path_steps", critical_path_steps},
                {"mode", env::to_string(mode)},
                {"search_task", printable(search_task)},
                {"note", note},
                {"evidence", ev}};
}

// --- helpers ---------------------------------------------------------------------------------

Mode classify_traversal(const std::string& query) {
    std::string q;
    for (char c : query) q.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    static const char* kSequenceWords[] = {"sequence", "flow",   "order",    "summar",    "timeline",
                                           "progress", "throughout", "chronolog", "evolv"};
    for (const char* w : kSequenceWords) {
        if (q.find(w) != std::string::npos) return Mode::BFS;
    }
    return Mode::DFS;
}

double rank_priority(int rank, int count) {
    if (count <= 0) return 0.0;
    return 1.0 - static_cast<double>(rank) / static_cast<double>(count);
}

// --- episode ---------------------------------------------------------------------------------------

Episode::Episode(EpisodeInput input, EpisodeConfig config, policy::Policy& policy)
    : input_(std::move(input)),
      config_(std::move(config)),
      policy_(policy),
      frontier_(config_.virtual_loss),
      cache_(config_.cache_block_tokens) {
    config_.validate();
    if (!input_.source) throw EnvironmentError("episode needs a frame source");
    if (trim(input_.query).empty()) throw ConfigError("query must not be empty");
    env_ = std::make_unique<env::Environment>(input_.source, input_.subtitles,
                                              config_.env_config(input_.source->span()));
    global_ = env_->init_state();
}

void Episode::account(const PolicyRequest& req, long long in, long long out, bool master) {
    cache_.step(req, config_.tokens);
    (master ? master_tokens_ : worker_tokens_) += in + out;
}

void Episode::record_master(const std::string& action, json args, long long in, long long out) {
    TraceRecord r;
    r.step = step_counter_++;
    r.round = round_;
    r.actor = "master";
    r.action = action;
    r.args = std::move(args);
    r.tokens_in = in;
    r.tokens_out = out;
    r.state_hash = global_.hash();
    trace_.push_back(std::move(r));
}

Episode::MasterCall Episode::master_call(PolicyRequest req, const std::string& action, json args) {
    PolicyResponse resp = policy_.decide(req);
    account(req, resp.tokens_in, resp.tokens_out, true);
    record_master(action, std::move(args), resp.tokens_in, resp.tokens_out);
    return {std::move(resp), std::move(req)};
}

std::string Episode::candidates_text() const {
    if (input_.candidates.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < input_.candidates.size(); ++i) {
        if (i > 0) out += '\n';
        out += fmt::format("{}. {}", i, input_.candidates[i]);
    }
    return out;
}

std::string Episode::evidence_text() const {
    if (global_.scratchpad.empty()) return "(none)";
    std::string out;
    for (const auto& it : global_.scratchpad.items()) {
        if (!out.empty()) out += '\n';
        out += fmt::format("[{}] @{}s (conf {:.2f}): {}", it.label, seconds(it.timestamp_s), it.confidence,
                           it.description);
        if (!it.subtitle.empty()) out += fmt::format(" | subtitle: {}", it.subtitle);
    }
    return out;
}

json Episode::evidence_json() const {
    json arr = json::array();
    for (const auto& it : global_.scratchpad.items()) {
        arr.push_back({{"label", it.label}, {"t", it.timestamp_s}, {"desc", printable(it.description)}});
    }
    return arr;
}

std::string Episode::root_context_str(const env::Observation& root) const {
    std::string out;
    for (const auto& c : root.cells) {
        if (!out.empty()) out += '\n';
        if (c.blacked) {
            out += fmt::format("[{}] blacked out", c.index);
        } else {
            out += fmt::format("[{}] {}s-{}s", c.index, seconds(c.interval.start_s), seconds(c.interval.end_s));
        }
    }
    for (const auto& cue : root.subtitles) {
        if (cue.text.empty()) continue;
        out += fmt::format("\n  subtitle {}s: {}", seconds(cue.start_s), cue.text);
    }
    return out;
}

std::vector<double> Episode::protected_timestamps() const {
    std::vector<double> out;
    for (const auto& it : global_.scratchpad.items()) out.push_back(it.timestamp_s);
    return out;
}

env::ObservationPtr Episode::root_observation() {
    global_.nav_stack.clear();
    global_.position = global_.region.grid;
    global_.depth = 0;
    return env_->observe(global_);
}

ImagePtr Episode::scratchpad_image() const {
    if (global_.scratchpad.empty()) return nullptr;
    return render::render_scratchpad(global_.scratchpad.items(), config_.tile_px).pixels;
}

void Episode::start() {
    if (started_) return;
    started_ = true;

    PolicyRequest req;
    req.role = Role::SearchTask;
    req.text = policy::fill_template(Role::SearchTask, {{"query", input_.query}, {"candidates", candidates_text()}});
    req.context = {{"query", input_.query}, {"candidates", input_.candidates}};
    try {
        auto call = master_call(req, "SEARCH_TASK");
        search_task_ = trim(call.response.raw_text);
    } catch (const TransportError& e) {
        note_ = fmt::format("search task extraction failed ({}); using the query", e.what());
        record_master("SEARCH_TASK", {}, 0, 0);
    }
    if (search_task_.empty()) search_task_ = input_.query;
    trace_.back().args = {{"task", printable(search_task_)}};

    switch (config_.traversal) {
        case Traversal::DFS: mode_ = Mode::DFS; break;
        case Traversal::BFS: mode_ = Mode::BFS; break;
        case Traversal::Auto: mode_ = classify_traversal(input_.query); break;
    }
    trace_.back().args["mode"] = env::to_string(mode_);
}

bool Episode::should_continue() {
    if (!started_) start();
    if (stop_ != StopReason::None) return false;
    if (sufficient_) {
        stop_ = StopReason::Sufficiency;
    } else if (tokens_used() >= config_.global_token_budget) {
        stop_ = StopReason::GlobalBudget;
    } else if (round_ >= config_.max_rounds || out_of_targets_) {
        stop_ = StopReason::WorkerBudget;
    }
    return stop_ == StopReason::None;
}

Target Episode::range_target(const Interval& range) const {
    const auto span = env_->span();
    const int k = config_.k;
    const double k2 = static_cast<double>(k) * k;
    const int cap = config_.resolved_max_depth(span);
    Interval iv{std::max(0.0, range.start_s), std::min(span.duration_s, range.end_s)};
    if (!(iv.width() > 0.0)) {
        // Empty or inverted: a one-second window at the requested start.
        iv.start_s = std::clamp(range.start_s, 0.0, std::max(0.0, span.duration_s - 1.0));
        iv.end_s = std::min(span.duration_s, iv.start_s + 1.0);
    }

    // The depth budget bounds temporal resolution: a range whose grid would be
    // finer than the deepest allowed layer is widened to that layer's span.
    if (cap < 32) {
        const double finest = timeline::depth_resolution(span, k, cap);
        if (iv.width() / k2 < finest * (1.0 - 1e-9)) {
            const double w = std::min(span.duration_s, finest * k2);
            const double start = std::clamp(iv.midpoint() - w / 2.0, 0.0, span.duration_s - w);
            iv = {start, start + w};
        }
    }
    int d = 0;
    while (d + 1 <= cap && d < 32 &&
           timeline::depth_resolution(span, k, d + 1) >= (iv.width() / k2) * (1.0 - 1e-9)) {
        ++d;
    }
    return Target{iv, d, std::nullopt};
}

std::vector<int> Episode::probe(const env::Observation& root) {
    std::vector<bool> blacked;
    int live = 0;
    for (const auto& c : root.cells) {
        blacked.push_back(c.blacked);
        if (!c.blacked) ++live;
    }
    const int top_n = std::min(std::max(config_.top_n, config_.workers), live);
    const int cell_count = config_.k * config_.k;

    PolicyRequest req;
    req.role = Role::MasterProbe;
    req.text = policy::fill_template(Role::MasterProbe, {{"query", input_.query},
                                                         {"context_str", root_context_str(root)},
                                                         {"top_n", std::to_string(top_n)}});
    req.images.push_back(root.grid.pixels);
    if (auto pad = scratchpad_image()) req.images.push_back(pad);
    req.context = {{"cells", cells_json(root.cells)}, {"top_n", top_n}, {"evidence", evidence_json()}};

    for (int attempt = 0; attempt < 2; ++attempt) {
        auto call = master_call(req, "PROBE");
        auto parsed = policy::parse_probe(call.response.raw_text, top_n, cell_count, blacked);
        if (parsed) {
            trace_.back().args = {{"top", *parsed}};
            return *parsed;
        }
        trace_.back().args = {{"error", parsed.error().message}, {"raw", printable(clip_raw(parsed.error().raw))}};
    }
    std::vector<int> fallback;
    for (const auto& c : root.cells) {
        if (!c.blacked && static_cast<int>(fallback.size()) < top_n) fallback.push_back(c.index);
    }
    record_master("PROBE_FALLBACK", {{"top", fallback}}, 0, 0);
    return fallback;
}

WorkerOutcome Episode::run_worker(const Target& target, int slot, Mode mode, int budget) {
    WorkerOutcome o;
    o.target = target;
    o.slot = slot;
    const std::string actor = fmt::format("worker:{}", slot);
    const auto span = env_->span();
    try {
        env::EnvState st =
            env_->worker_state(target, global_.dead_zones, protected_timestamps(), mode, round_);
        env::ObservationPtr obs = env_->observe(st);
        std::string prev = fmt::format("Assigned {}.", timeline::to_string(st.region.owned()));
        std::optional<env::StepResult> last;
        std::optional<env::Action> last_action;
        o.max_depth_seen = st.depth;
        const json global_ev = evidence_json();

        auto build = [&](const std::string& previous) {
            PolicyRequest req;
            req.role = Role::WorkerStep;
            std::string cells_str;
            for (const auto& c : obs->cells) {
                if (!c.in_scope) continue;
                if (!cells_str.empty()) cells_str += '\n';
                const double w = c.interval.width();
                cells_str += fmt::format("[{}] {}-{}", c.index, env::format_seconds(c.interval.start_s, w),
                                         env::format_seconds(c.interval.end_s, w));
                if (c.blacked) cells_str += " blacked out";
            }
            // Like the cell list, subtitles stay within the cells this worker may act on.
            const Interval scope = st.region.owned();
            for (const auto& cue : obs->subtitles) {
                if (cue.text.empty() || !scope.overlaps({cue.start_s, cue.end_s})) continue;
                cells_str += fmt::format("\n  subtitle {}s: {}", seconds(cue.start_s), cue.text);
            }
            req.text = policy::fill_template(
                Role::WorkerStep,
                {{"search_task", search_task_},
                 {"query", input_.query},
                 {"start", seconds(st.position.start_s)},
                 {"end", seconds(st.position.end_s)},
                 {"pct", fmt::format("{:.2f}% of the video)", 100.0 * st.position.width() / span.duration_s)},
                 {"K", std::to_string(config_.k)},
                 {"context_str", cells_str},
                 {"prev_summary", previous}});
            req.images.push_back(obs->grid.pixels);
            if (last && last->frame) req.images.push_back(last->frame);
            if (last && last->strip) req.images.push_back(last->strip->pixels);

            json avail = json::array();
            for (auto kind : obs->available.kinds()) avail.push_back(env::to_string(kind));
            json ev = global_ev;
            for (const auto& it : st.scratchpad.items()) {
                ev.push_back({{"label", it.label}, {"t", it.timestamp_s}, {"desc", printable(it.description)}});
            }
            json queued = json::array();
            for (const auto& p : st.promising) queued.push_back({p.interval.start_s, p.interval.end_s});
            json last_j = nullptr;
            if (last_action && last) {
                last_j = {{"action", env::to_string(last_action->kind)},
                          {"cell", last_action->cells.empty() ? -1 : last_action->cells.front()},
                          {"t", last->frame_t}};
            }
            const Interval owned = st.region.owned();
            req.context = {{"k", config_.k},
                           {"cells", cells_json(obs->cells)},
                           {"available", avail},
                           {"depth", st.depth},
                           {"position", {st.position.start_s, st.position.end_s}},
                           {"owned", {owned.start_s, owned.end_s}},
                           {"mode", env::to_string(mode)},
                           {"evidence", ev},
                           {"queued", queued},
                           {"last", last_j}};
            return req;
        };

        for (int step = 0; step < budget && !st.finished; ++step) {
            std::optional<env::StepResult> result;
            env::Action action;
            std::string previous = prev;
            for (int attempt = 0; attempt < 2 && !result; ++attempt) {
                PolicyRequest req = build(previous);
                PolicyResponse resp = policy_.decide(req);
                o.tokens_in += resp.tokens_in;
                o.tokens_out += resp.tokens_out;
                o.requests.push_back(std::move(req));
                std::string err;
                auto parsed = policy::parse_worker_action(resp.raw_text);
                if (parsed) {
                    try {
                        result = env_->step(st, *parsed);
                        action = *parsed;
                    } catch (const Error& e) {
                        err = e.what();
                    }
                } else {
                    err = parsed.error().message;
                }
                TraceRecord tr;
                tr.round = round_;
                tr.actor = actor;
                tr.tokens_in = resp.tokens_in;
                tr.tokens_out = resp.tokens_out;
                tr.state_hash = st.hash();
                if (result) {
                    tr.action = env::to_string(action.kind);
                    tr.args = action.to_json();
                    tr.args.erase("action");
                    tr.result_hash = result->hash();
                } else {
                    tr.action = "INVALID";
                    tr.args = {{"error", printable(err)}, {"raw", printable(clip_raw(resp.raw_text))}};
                    previous = fmt::format("Your last reply was rejected: {}", err);
                }
                o.trace.push_back(std::move(tr));
            }
            if (!result) {
                action = env::Action::finished();
                result = env_->step(st, action);
                TraceRecord tr;
                tr.round = round_;
                tr.actor = actor;
                tr.action = "FINISHED";
                tr.args = {{"fallback", true}};
                tr.state_hash = st.hash();
                tr.result_hash = result->hash();
                o.trace.push_back(std::move(tr));
            }
            ++o.steps;
            if (action.kind == env::ActionKind::Expand) ++o.expands;
            if (result->observation) obs = result->observation;
            if (!result->promising.empty()) {
                o.promising.insert(o.promising.end(), result->promising.begin(), result->promising.end());
            }
            if (result->terminal) {
                o.finished = true;
                o.dead_zones = result->dead_zones;
            }
            o.max_depth_seen = std::max(o.max_depth_seen, st.depth);
            prev = result->summary;
            last = std::move(result);
            last_action = action;
        }
        o.evidence = st.scratchpad.items();
    } catch (const std::exception& e) {
        o.failed = true;
        o.error = e.what();
    }
    return o;
}

void Episode::uncertainty(RoundSummary& summary) {
    auto root = root_observation();
    const int n = config_.max_suggestions;
    const double dead_measure = global_.dead_zones.measure();
    int live = 0;
    for (const auto& c : root->cells) live += c.blacked ? 0 : 1;
    const std::string progress =
        fmt::format("Round {} of {}. {:.1f}% of the video explored and blacked out. {} of {} cells still open. "
                    "{} evidence item(s).",
                    round_, config_.max_rounds, 100.0 * dead_measure / env_->span().duration_s, live,
                    root->cells.size(), global_.scratchpad.size());

    PolicyRequest req;
    req.role = Role::MasterUncertainty;
    req.text = policy::fill_template(Role::MasterUncertainty, {{"query", input_.query},
                                                               {"candidates", candidates_text()},
                                                               {"evidence_text", evidence_text()},
                                                               {"progress_text", progress},
                                                               {"context_str", root_context_str(*root)},
                                                               {"N", std::to_string(n)}});
    if (auto pad = scratchpad_image()) req.images.push_back(pad);
    req.images.push_back(root->grid.pixels);
    const int cap = config_.resolved_max_depth(env_->span());
    req.context = {{"cells", cells_json(root->cells)},
                   {"evidence", evidence_json()},
                   {"max_suggestions", n},
                   {"finest_span_s", timeline::depth_resolution(env_->span(), config_.k, std::min(cap, 32))},
                   {"duration_s", env_->span().duration_s}};

    std::optional<policy::UncertaintyDecision> decision;
    for (int attempt = 0; attempt < 2 && !decision; ++attempt) {
        auto call = master_call(req, "UNCERTAINTY");
        auto parsed = policy::parse_uncertainty(call.response.raw_text, config_.k * config_.k, n);
        if (parsed) {
            decision = *parsed;
        } else {
            trace_.back().args = {{"error", parsed.error().message},
                                  {"raw", printable(clip_raw(parsed.error().raw))}};
        }
    }
    if (!decision) {
        policy::UncertaintyDecision d;
        d.kind = policy::UncertaintyDecision::Kind::Continue;
        d.reasoning = "fallback";
        decision = d;
        pending_explore_.clear();
        if (!fifo_.empty()) pending_explore_.push_back(fifo_.front());
        record_master("UNCERTAINTY_FALLBACK", {{"explore", pending_explore_.empty() ? json::array()
                                                                                     : json::array({fifo_.front().key()})}},
                      0, 0);
        summary.decision = "continue (fallback)";
        return;
    }

    std::vector<std::string> erase;
    for (const auto& l : decision->erase) {
        const auto& items = global_.scratchpad.items();
        const bool known = std::any_of(items.begin(), items.end(), [&](const EvidenceItem& it) { return it.label == l; });
        if (known && std::find(erase.begin(), erase.end(), l) == erase.end()) erase.push_back(l);
    }
    if (!erase.empty()) env_->prune_evidence(global_, erase);

    json args;
    args["erase"] = erase;
    if (decision->kind == policy::UncertaintyDecision::Kind::FinalDecision) {
        sufficient_ = true;
        summary.decision = "final";
        args["decision"] = "FINAL_DECISION";
    } else {
        pending_explore_.clear();
        json explore = json::array();
        for (int c : decision->explore_cells) {
            const Target t = env::cell_target(env_->span(), timeline::CellAddress(config_.k, {c}));
            pending_explore_.push_back(t);
            explore.push_back(t.key());
        }
        for (const auto& r : decision->explore_ranges) {
            const Target t = range_target(r);
            pending_explore_.push_back(t);
            explore.push_back(t.key());
        }
        summary.decision = "continue";
        args["decision"] = "CONTINUE";
        args["explore"] = explore;
    }
    trace_.back().args = args;
    trace_.back().state_hash = global_.hash();
}

RoundSummary Episode::run_round() {
    if (!started_) start();
    ++round_;
    global_.round = round_;
    RoundSummary s;
    s.round = round_;
    const double theta = config_.blackout_theta;

    auto root = root_observation();
    const bool any_live =
        std::any_of(root->cells.begin(), root->cells.end(), [](const env::CellDescriptor& c) { return !c.blacked; });
    if (!any_live) {
        out_of_targets_ = true;
        s.decision = "no open cells";
        rounds_.push_back(s);
        return s;
    }
    const std::vector<int> ranked = probe(*root);

    frontier_.clear();
    for (const auto& t : pending_explore_) frontier_.push(t, 1.0);
    pending_explore_.clear();
    std::vector<bool> fifo_used(fifo_.size(), false);
    const int n_ranked = static_cast<int>(ranked.size());
    for (int r = 0; r < n_ranked; ++r) {
        const Interval cell = root->cells[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)])].interval;
        bool replaced = false;
        for (std::size_t i = 0; i < fifo_.size(); ++i) {
            if (!fifo_used[i] && cell.contains(fifo_[i].interval)) {
                frontier_.push(fifo_[i], rank_priority(r, n_ranked));
                fifo_used[i] = true;
                replaced = true;
            }
        }
        if (!replaced) {
            frontier_.push(env::cell_target(env_->span(), timeline::CellAddress(config_.k, {ranked[static_cast<std::size_t>(r)]})),
                           rank_priority(r, n_ranked));
        }
    }
    for (std::size_t i = 0; i < fifo_.size(); ++i) {
        if (!fifo_used[i]) frontier_.push(fifo_[i], 0.0);
    }
    frontier_.remove_if_blacked(global_.dead_zones, theta);

    const std::vector<Target> assigned = frontier_.assign(config_.workers);
    if (assigned.empty()) {
        out_of_targets_ = true;
        s.decision = "nothing to assign";
        rounds_.push_back(s);
        return s;
    }
    for (const auto& t : assigned) {
        s.assigned.push_back(t.key());
        std::erase_if(fifo_, [&](const Target& f) { return f.key() == t.key(); });
    }
    record_master("ASSIGN", {{"targets", s.assigned}}, 0, 0);

    const Mode mode = mode_;
    const int budget = mode == Mode::DFS ? config_.dfs_budget : config_.bfs_budget;
    std::vector<WorkerOutcome> outs(assigned.size());
    if (config_.parallel && assigned.size() > 1) {
        std::vector<std::future<WorkerOutcome>> futs;
        for (std::size_t i = 0; i < assigned.size(); ++i) {
            futs.push_back(std::async(std::launch::async, [this, &assigned, i, mode, budget] {
                return run_worker(assigned[i], static_cast<int>(i), mode, budget);
            }));
        }
        for (std::size_t i = 0; i < futs.size(); ++i) outs[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < assigned.size(); ++i) {
            outs[i] = run_worker(assigned[i], static_cast<int>(i), mode, budget);
        }
    }

    // Merge at one synchronization point, in timeline order.
    std::vector<std::size_t> order(outs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ta = outs[a].target;
        const auto& tb = outs[b].target;
        if (ta.interval.start_s != tb.interval.start_s) return ta.interval.start_s < tb.interval.start_s;
        return ta.key() < tb.key();
    });
    for (std::size_t idx : order) {
        auto& o = outs[idx];
        for (auto& req : o.requests) cache_.step(req, config_.tokens);
        worker_tokens_ += o.tokens_in + o.tokens_out;
        for (auto& tr : o.trace) {
            tr.step = step_counter_++;
            trace_.push_back(std::move(tr));
        }
        if (o.failed) {
            record_master("WORKER_FAILED", {{"target", o.target.key()}, {"error", printable(o.error)}}, 0, 0);
        }
        for (auto item : o.evidence) {
            global_.scratchpad.add(std::move(item));
            ++s.evidence_added;
        }
        for (const auto& dz : o.dead_zones) env_->add_dead_zone(global_, dz, round_);
        for (const auto& p : o.promising) {
            const bool dup = std::any_of(fifo_.begin(), fifo_.end(), [&](const Target& f) { return f.key() == p.key(); });
            if (!dup) fifo_.push_back(p);
        }
        frontier_.complete(o.target.key());
        s.worker_steps += o.steps;
        s.max_worker_steps = std::max(s.max_worker_steps, o.steps);
        max_expands_ = std::max(max_expands_, o.expands);
        max_depth_seen_ = std::max(max_depth_seen_, o.max_depth_seen);
    }
    worker_steps_ += s.worker_steps;
    critical_path_ += s.max_worker_steps;
    std::erase_if(fifo_, [&](const Target& f) { return is_blacked(global_.dead_zones, f.interval, theta); });

    uncertainty(s);
    s.evidence_total = static_cast<int>(global_.scratchpad.size());
    s.dead_fraction = global_.dead_zones.measure() / env_->span().duration_s;
    rounds_.push_back(s);
    return s;
}

EpisodeResult Episode::finish() {
    EpisodeResult r;
    if (!global_.scratchpad.empty()) {
        const int n = static_cast<int>(input_.candidates.size());
        std::string descriptions;
        for (const auto& it : global_.scratchpad.items()) {
            if (!descriptions.empty()) descriptions += '\n';
            descriptions += fmt::format("[{}] @{}s: {}", it.label, seconds(it.timestamp_s), it.description);
        }
        PolicyRequest req;
        req.role = Role::MasterFinal;
        req.text = policy::fill_template(Role::MasterFinal, {{"query", input_.query},
                                                             {"candidates", candidates_text()},
                                                             {"evidence_descriptions", descriptions}});
        req.images.push_back(scratchpad_image());
        req.context = {{"evidence", evidence_json()}, {"candidates", input_.candidates}};
        std::string reasoning;
        try {
            for (int attempt = 0; attempt < 2 && !r.answer; ++attempt) {
                auto call = master_call(req, "FINAL");
                auto parsed = policy::parse_final(call.response.raw_text, n);
                if (parsed) {
                    r.answer = parsed->answer;
                    trace_.back().args = {{"answer", parsed->answer}};
                } else {
                    trace_.back().args = {{"error", parsed.error().message},
                                          {"raw", printable(clip_raw(parsed.error().raw))}};
                    auto objs = policy::json_objects(call.response.raw_text);
                    reasoning = call.response.raw_text;
                    for (const auto& o : objs) {
                        if (o.contains("reasoning") && o.at("reasoning").is_string()) {
                            reasoning = o.at("reasoning").get<std::string>();
                            break;
                        }
                    }
                }
            }
        } catch (const TransportError& e) {
            note_ = fmt::format("final decision failed: {}", e.what());
        }
        if (!r.answer && n > 0 && !reasoning.empty()) {
            // Fall back to whichever choice the reasoning mentions most.
            std::vector<int> support(static_cast<std::size_t>(n), 0);
            for (int i = 0; i < n; ++i) {
                const auto& c = input_.candidates[static_cast<std::size_t>(i)];
                if (c.empty()) continue;
                for (auto pos = reasoning.find(c); pos != std::string::npos; pos = reasoning.find(c, pos + 1)) {
                    ++support[static_cast<std::size_t>(i)];
                }
            }
            const auto best = std::max_element(support.begin(), support.end());
            if (*best > 0 && std::count(support.begin(), support.end(), *best) == 1) {
                r.answer = static_cast<int>(best - support.begin());
                note_ = "answer taken from candidate mentions after an invalid final reply";
                record_master("FINAL_FALLBACK", {{"answer", *r.answer}}, 0, 0);
            }
        }
        if (!r.answer && note_.empty()) note_ = "no valid final answer: abstained";
    } else {
        note_ = note_.empty() ? "empty scratchpad: abstained" : note_;
        record_master("ABSTAIN", {{"reason", "empty scratchpad"}}, 0, 0);
    }

    if (input_.correct) r.correct = r.answer && *r.answer == *input_.correct;
    r.rounds = round_;
    r.stop_reason = stop_;
    r.master_tokens = master_tokens_;
    r.worker_tokens = worker_tokens_;
    r.total_tokens = master_tokens_ + worker_tokens_;
    r.cache_hit_tokens = cache_.hits();
    r.cache_total_tokens = cache_.total();
    r.cache_hit_rate = cache_.total() > 0 ? cache_.hit_rate() : 0.0;
    r.evidence = global_.scratchpad.items();
    r.round_summaries = rounds_;
    r.trace = trace_;
    r.worker_steps = worker_steps_;
    r.critical_path_steps = critical_path_;
    r.max_worker_expands = max_expands_;
    r.max_state_depth = max_depth_seen_;
    r.search_task = search_task_;
    r.mode = mode_;
    r.dead_zones = global_.dead_zones;
    r.note = note_;
    return r;
}

EpisodeResult run_episode(const EpisodeInput& input, const EpisodeConfig& config, policy::Policy& policy) {
    Episode ep(input, config, policy);
    try {
        while (ep.should_continue()) ep.run_round();
    } catch (const TransportError&) {
        // The Master lost its backend mid-round; report what was gathered.
    }
    return ep.finish();
}

}  // namespace atlas::orchestrator
