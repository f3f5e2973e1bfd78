#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "videoatlas/env.hpp"
#include "videoatlas/metrics.hpp"
#include "videoatlas/request.hpp"

namespace atlas::orchestrator {

using env::Mode;
using env::Target;
using timeline::Interval;

enum class Traversal { Auto, DFS, BFS };
enum class StopReason { None, WorkerBudget, Sufficiency, GlobalBudget };

const char* to_string(StopReason r);
const char* to_string(Traversal t);

struct EpisodeConfig {
    int k = 8;
    int tile_px = media::kDefaultTilePx;
    std::optional<int> max_depth;  // unset: first sub-second layer
    int workers = 3;
    int top_n = 3;
    int dfs_budget = 8;
    int bfs_budget = 1;
    int max_rounds = 8;
    long long global_token_budget = 500'000;
    double blackout_theta = 0.95;
    double expand_floor_s = 1.0;
    double evidence_guard_s = 0.5;
    double virtual_loss = 1.0;
    int max_suggestions = 3;  // N in the uncertainty prompt
    Traversal traversal = Traversal::Auto;
    bool parallel = true;  // run a round's workers on their own threads
    metrics::TokenModel tokens;
    int cache_block_tokens = 16;

    /// Throws ConfigError on a non-positive size or budget.
    void validate() const;
    int resolved_max_depth(const timeline::VideoSpan& span) const;
    env::EnvConfig env_config(const timeline::VideoSpan& span) const;
};

// --- frontier ------------------------------------------------------------------------

/// Master's priority queue with virtual loss. Priorities live on [0, 1]; an
/// assigned entry carries a virtual loss that lowers its effective priority
/// and keeps it from being handed out again until its result is merged.
class FrontierQueue {
public:
    struct Entry {
        Target target;
        double priority = 0.0;
        int virtual_loss = 0;
        std::uint64_t seq = 0;
    };

    explicit FrontierQueue(double lambda = 1.0) : lambda_(lambda) {}

    /// Inserts or re-scores (keeping any virtual loss).
    void push(const Target& t, double priority);
    /// Up to w distinct entries by effective priority (ties: earlier insert);
    /// each gains one unit of virtual loss.
    std::vector<Target> assign(int w);
    /// Result merged: clears the virtual loss and drops the entry.
    void complete(const std::string& key);
    void remove_if_blacked(const env::DeadZoneSet& dead, double theta);
    void clear() { entries_.clear(); }

    double effective_priority(const std::string& key) const;
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    double lambda_;
    std::vector<Entry> entries_;
    std::uint64_t next_seq_ = 0;
};

// --- traces ------------------------------------------------------------------------------

struct TraceRecord {
    int step = 0;
    int round = 0;
    std::string actor;   // "master" or "worker:<i>"
    std::string action;
    nlohmann::json args = nlohmann::json::object();
    long long tokens_in = 0;
    long long tokens_out = 0;
    std::uint64_t state_hash = 0;
    std::uint64_t result_hash = 0;

    nlohmann::json to_json() const;
};

void write_trace_jsonl(std::ostream& out, const std::vector<TraceRecord>& records);

// --- episode -------------------------------------------------------------------------------

struct EpisodeInput {
    std::shared_ptr<media::FrameSource> source;
    std::vector<media::SubtitleCue> subtitles;
    std::string query;
    std::vector<std::string> candidates;
    std::optional<int> correct;  // ground truth when known
};

struct WorkerOutcome {
    Target target;
    int slot = 0;
    std::vector<EvidenceItem> evidence;  // commit order, worker-local labels
    std::vector<Interval> dead_zones;
    std::vector<Target> promising;
    int steps = 0;
    int expands = 0;
    int max_depth_seen = 0;
    bool finished = false;
    bool failed = false;
    std::string error;
    long long tokens_in = 0;
    long long tokens_out = 0;
    std::vector<TraceRecord> trace;  // step numbers assigned at merge
    std::vector<policy::PolicyRequest> requests;  // replayed through the cache at merge
};

struct RoundSummary {
    int round = 0;
    std::vector<std::string> assigned;
    int evidence_added = 0;
    int evidence_total = 0;
    int worker_steps = 0;
    int max_worker_steps = 0;
    double dead_fraction = 0.0;
    std::string decision;
};

struct EpisodeResult {
    std::optional<int> answer;  // unset: abstained
    std::optional<bool> correct;
    int rounds = 0;
    StopReason stop_reason = StopReason::None;
    long long master_tokens = 0;
    long long worker_tokens = 0;
    long long total_tokens = 0;
    long long cache_hit_tokens = 0;
    long long cache_total_tokens = 0;
    double cache_hit_rate = 0.0;
    std::vector<EvidenceItem> evidence;
    std::vector<RoundSummary> round_summaries;
    std::vector<TraceRecord> trace;
    int worker_steps = 0;
    int critical_path_steps = 0;
    int max_worker_expands = 0;
    int max_state_depth = 0;
    std::string search_task;
    Mode mode = Mode::DFS;
    env::DeadZoneSet dead_zones;
    std::string note;  // why the answer was abstained or fell back, if it did

    long long effective_tokens() const { return total_tokens - cache_hit_tokens; }
    nlohmann::json report_json() const;
};

/// DFS for detail localization, BFS for sequence/flow questions, chosen by
/// keywords in the query.
Mode classify_traversal(const std::string& query);

/// Root-cell ranking priorities in [0, 1]: 1 for the best, falling linearly.
double rank_priority(int rank, int count);

/// One episode, round by round. run_episode() drives it to completion; tests
/// step it manually.
class Episode {
public:
    Episode(EpisodeInput input, EpisodeConfig config, policy::Policy& policy);

    /// Search-task extraction and traversal selection.
    void start();
    /// Checks the stop levels; returns false once the episode must stop.
    bool should_continue();
    /// Probe, assignment, workers, merge, uncertainty analysis.
    RoundSummary run_round();
    /// Final decision over the scratchpad.
    EpisodeResult finish();

    env::Environment& environment() { return *env_; }
    const env::EnvState& global_state() const { return global_; }
    env::EnvState& global_state() { return global_; }
    FrontierQueue& frontier() { return frontier_; }
    const std::vector<Target>& fifo() const { return fifo_; }
    StopReason stop_reason() const { return stop_; }
    const EpisodeConfig& config() const { return config_; }
    long long tokens_used() const { return master_tokens_ + worker_tokens_; }

    /// Target for a Master-suggested time range (see DESIGN notes in README).
    Target range_target(const Interval& range) const;

    /// Worker run on one target against a snapshot of global memory.
    WorkerOutcome run_worker(const Target& target, int slot, Mode mode, int budget);

    /// Masked root grid and scratchpad images as the Master sees them.
    env::ObservationPtr root_observation();
    ImagePtr scratchpad_image() const;

private:
    struct MasterCall {
        policy::PolicyResponse response;
        policy::PolicyRequest request;
    };
    MasterCall master_call(policy::PolicyRequest req, const std::string& action, nlohmann::json args = {});
    void record_master(const std::string& action, nlohmann::json args, long long in, long long out);
    void account(const policy::PolicyRequest& req, long long in, long long out, bool master);

    std::vector<int> probe(const env::Observation& root);
    void uncertainty(RoundSummary& summary);
    nlohmann::json evidence_json() const;
    std::string candidates_text() const;
    std::string evidence_text() const;
    std::string root_context_str(const env::Observation& root) const;
    std::vector<double> protected_timestamps() const;

    EpisodeInput input_;
    EpisodeConfig config_;
    policy::Policy& policy_;
    std::unique_ptr<env::Environment> env_;
    env::EnvState global_;
    FrontierQueue frontier_;
    std::vector<Target> fifo_;
    std::vector<Target> pending_explore_;
    metrics::CacheSim cache_;
    Mode mode_ = Mode::DFS;
    std::string search_task_;
    int round_ = 0;
    int step_counter_ = 0;
    bool started_ = false;
    bool sufficient_ = false;
    bool out_of_targets_ = false;
    StopReason stop_ = StopReason::None;
    long long master_tokens_ = 0;
    long long worker_tokens_ = 0;
    std::vector<TraceRecord> trace_;
    std::vector<RoundSummary> rounds_;
    int worker_steps_ = 0;
    int critical_path_ = 0;
    int max_expands_ = 0;
    int max_depth_seen_ = 0;
    std::string note_;
};

EpisodeResult run_episode(const EpisodeInput& input, const EpisodeConfig& config, policy::Policy& policy);

}  // namespace atlas::orchestrator
