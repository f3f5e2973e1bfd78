#include "videoatlas/config.hpp"

#include <fstream>
#include <set>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::config {

using nlohmann::json;
using orchestrator::Traversal;

namespace {

// Reads an object field by field and rejects whatever was never asked for.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(fmt::format("'{}' must be an object", where()));
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key) && !obj_.at(key).is_null();
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        out = as<T>(key);
    }

    template <class T>
    T as(const std::string& key) {
        seen_.insert(key);
        const json& v = obj_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw type_error(key, "a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw type_error(key, "an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.get<long long>() < 0) throw type_error(key, "a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw type_error(key, "a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw type_error(key, "a string");
        }
        return v.get<T>();
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.contains(it.key())) throw ConfigError(fmt::format("unknown config key '{}'", child(it.key())));
        }
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }
    ConfigError type_error(const std::string& key, const char* what) const {
        return ConfigError(fmt::format("config key '{}' must be {}", child(key), what));
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

}  // namespace

void RunConfig::validate() const {
    if (version != kConfigVersion) throw ConfigError(fmt::format("unsupported config version {}", version));
    episode.validate();
    if (media && synthetic) throw ConfigError("config has both 'media' and 'synthetic'");
    if (!media && !synthetic) throw ConfigError("config needs 'media' or 'synthetic'");
    if (backend == Backend::Oracle && !synthetic) {
        throw ConfigError("the oracle backend only runs synthetic episodes");
    }
    if (media) {
        if (media->video.empty()) throw ConfigError("config key 'media.video' is required");
        if (!(media->duration_s > 0.0)) throw ConfigError("config key 'media.duration_s' must be positive");
        if (!(media->fps > 0.0)) throw ConfigError("config key 'media.fps' must be positive");
    }
    if (backend == Backend::Remote && endpoint.max_attempts < 1) {
        throw ConfigError("config key 'policy.max_attempts' must be positive");
    }
    if (answer && *answer < 0) throw ConfigError("config key 'answer' must not be negative");
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig c;
    Reader r(doc, "");
    if (!r.has("version")) throw ConfigError("config key 'version' is required");
    c.version = r.as<int>("version");
    if (c.version != kConfigVersion) throw ConfigError(fmt::format("unsupported config version {}", c.version));
    r.get("seed", c.seed);

    auto& e = c.episode;
    r.get("k", e.k);
    r.get("tile_px", e.tile_px);
    if (r.has("max_depth")) {
        const json& v = r.raw("max_depth");
        if (v.is_string() && v.get<std::string>() == "auto") {
            e.max_depth.reset();
        } else {
            e.max_depth = r.as<int>("max_depth");
        }
    }
    r.get("workers", e.workers);
    r.get("top_n", e.top_n);
    r.get("dfs_budget", e.dfs_budget);
    r.get("bfs_budget", e.bfs_budget);
    r.get("max_rounds", e.max_rounds);
    r.get("global_token_budget", e.global_token_budget);
    r.get("blackout_theta", e.blackout_theta);
    r.get("expand_floor_s", e.expand_floor_s);
    r.get("evidence_guard_s", e.evidence_guard_s);
    r.get("virtual_loss", e.virtual_loss);
    r.get("max_suggestions", e.max_suggestions);
    if (r.has("traversal")) {
        const std::string t = r.as<std::string>("traversal");
        if (t == "auto") e.traversal = Traversal::Auto;
        else if (t == "dfs") e.traversal = Traversal::DFS;
        else if (t == "bfs") e.traversal = Traversal::BFS;
        else throw ConfigError(fmt::format("config key 'traversal' must be auto, dfs or bfs, not '{}'", t));
    }
    r.get("parallel", e.parallel);
    r.get("image_patch_px", e.tokens.image_patch_px);
    r.get("text_bytes_per_token", e.tokens.text_bytes_per_token);
    r.get("cache_block_tokens", e.cache_block_tokens);

    if (r.has("media")) {
        Reader m(r.raw("media"), "media");
        MediaConfig mc;
        if (m.has("video")) mc.video = resolve(m.as<std::string>("video"), base_dir);
        if (m.has("subtitles")) mc.subtitles = resolve(m.as<std::string>("subtitles"), base_dir);
        m.get("duration_s", mc.duration_s);
        m.get("fps", mc.fps);
        m.get("decoder", mc.decoder);
        m.finish();
        c.media = mc;
    }
    if (r.has("synthetic")) {
        Reader s(r.raw("synthetic"), "synthetic");
        bench::NeedleSpec ns;
        s.get("duration_s", ns.duration_s);
        s.get("events", ns.events);
        s.get("event_width_s", ns.event_width_s);
        s.get("disjoint", ns.disjoint);
        s.get("distractors", ns.distractors);
        s.get("subtitle_every_s", ns.subtitle_every_s);
        s.finish();
        ns.seed = c.seed;
        ns.k = e.k;
        ns.tile_px = e.tile_px;
        c.synthetic = ns;
    }
    if (r.has("policy")) {
        Reader p(r.raw("policy"), "policy");
        if (p.has("backend")) {
            const std::string b = p.as<std::string>("backend");
            if (b == "oracle") c.backend = Backend::Oracle;
            else if (b == "remote") c.backend = Backend::Remote;
            else throw ConfigError(fmt::format("config key 'policy.backend' must be oracle or remote, not '{}'", b));
        }
        p.get("endpoint", c.endpoint.url);
        p.get("model", c.endpoint.model);
        p.get("max_tokens", c.endpoint.max_tokens);
        p.get("max_attempts", c.endpoint.max_attempts);
        if (p.has("backoff_ms")) c.endpoint.backoff = std::chrono::milliseconds(p.as<int>("backoff_ms"));
        if (p.has("timeout_s")) c.endpoint.timeout = std::chrono::seconds(p.as<int>("timeout_s"));
        p.finish();
    }
    if (r.has("output_dir")) c.output_dir = r.as<std::string>("output_dir");
    r.get("query", c.query);
    if (r.has("candidates")) {
        const json& v = r.raw("candidates");
        if (!v.is_array()) throw ConfigError("config key 'candidates' must be an array of strings");
        for (const auto& x : v) {
            if (!x.is_string()) throw ConfigError("config key 'candidates' must be an array of strings");
            c.candidates.push_back(x.get<std::string>());
        }
    }
    if (r.has("answer")) c.answer = r.as<int>("answer");
    r.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(fmt::format("config '{}' is not valid JSON", path.string()));
    return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
    const auto& e = c.episode;
    json j{{"version", c.version},
           {"seed", c.seed},
           {"k", e.k},
           {"tile_px", e.tile_px},
           {"max_depth", e.max_depth ? json(*e.max_depth) : json("auto")},
           {"workers", e.workers},
           {"top_n", e.top_n},
           {"dfs_budget", e.dfs_budget},
           {"bfs_budget", e.bfs_budget},
           {"max_rounds", e.max_rounds},
           {"global_token_budget", e.global_token_budget},
           {"blackout_theta", e.blackout_theta},
           {"expand_floor_s", e.expand_floor_s},
           {"evidence_guard_s", e.evidence_guard_s},
           {"virtual_loss", e.virtual_loss},
           {"max_suggestions", e.max_suggestions},
           {"traversal", orchestrator::to_string(e.traversal)},
           {"parallel", e.parallel},
           {"image_patch_px", e.tokens.image_patch_px},
           {"text_bytes_per_token", e.tokens.text_bytes_per_token},
           {"cache_block_tokens", e.cache_block_tokens},
           {"output_dir", c.output_dir.string()},
           {"policy",
            {{"backend", c.backend == Backend::Oracle ? "oracle" : "remote"},
             {"endpoint", c.endpoint.url},
             {"model", c.endpoint.model},
             {"max_tokens", c.endpoint.max_tokens},
             {"max_attempts", c.endpoint.max_attempts},
             {"backoff_ms", c.endpoint.backoff.count()},
             {"timeout_s", c.endpoint.timeout.count()}}}};
    if (c.media) {
        j["media"] = {{"video", c.media->video.string()},
                      {"duration_s", c.media->duration_s},
                      {"fps", c.media->fps},
                      {"decoder", c.media->decoder}};
        if (!c.media->subtitles.empty()) j["media"]["subtitles"] = c.media->subtitles.string();
    }
    if (c.synthetic) {
        j["synthetic"] = {{"duration_s", c.synthetic->duration_s},
                          {"events", c.synthetic->events},
                          {"event_width_s", c.synthetic->event_width_s},
                          {"disjoint", c.synthetic->disjoint},
                          {"distractors", c.synthetic->distractors},
                          {"subtitle_every_s", c.synthetic->subtitle_every_s}};
    }
    if (!c.query.empty()) j["query"] = c.query;
    if (!c.candidates.empty()) j["candidates"] = c.candidates;
    if (c.answer) j["answer"] = *c.answer;
    return j;
}

}  // namespace atlas::config
