#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "videoatlas/bench.hpp"
#include "videoatlas/config.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/media.hpp"
#include "videoatlas/metrics.hpp"
#include "videoatlas/orchestrator.hpp"
#include "videoatlas/policy.hpp"

namespace atlas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised inside a command to leave with a specific exit code.
struct Exit {
    int code;
    std::string message;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Exit{kExitFailure, fmt::format("cannot write {}", path.string())};
    f << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Exit{kExitMedia, fmt::format("cannot read {}", path.string())};
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Base {
    orchestrator::EpisodeConfig episode;
    std::uint64_t seed = 0;
};

// Sweeps take episode settings from an optional run config; flags win.
Base load_base(const std::string& config_path, std::optional<std::uint64_t> seed) {
    Base b;
    if (!config_path.empty()) {
        const auto rc = config::load_run_config(config_path);
        b.episode = rc.episode;
        b.seed = rc.seed;
    }
    if (seed) b.seed = *seed;
    return b;
}

// --- run ---------------------------------------------------------------------------------

struct RunOptions {
    std::string config;
    std::string query;
    std::vector<std::string> candidates;
    std::optional<int> answer;
    std::string output_dir;
};

int cmd_run(const RunOptions& o, std::ostream& out) {
    config::RunConfig rc = config::load_run_config(o.config);
    if (!o.output_dir.empty()) rc.output_dir = o.output_dir;

    orchestrator::EpisodeInput input;
    std::unique_ptr<policy::Policy> pol;
    if (rc.synthetic) {
        const bench::NeedleEpisode ep = bench::make_needle_episode(*rc.synthetic);
        input = ep.input();
        if (rc.backend == config::Backend::Oracle) pol = std::make_unique<policy::OraclePolicy>(ep.knowledge(), rc.episode.tokens);
    } else {
        const auto& m = *rc.media;
        if (!fs::exists(m.video)) throw Exit{kExitMedia, fmt::format("media file not found: {}", m.video.string())};
        if (!m.subtitles.empty()) {
            if (!fs::exists(m.subtitles)) {
                throw Exit{kExitMedia, fmt::format("subtitle file not found: {}", m.subtitles.string())};
            }
            const auto parsed = media::parse_srt(read_file(m.subtitles));
            input.subtitles = parsed.cues;
        }
        input.source = std::make_shared<media::DecoderSource>(
            m.video, timeline::VideoSpan::make(m.duration_s, m.fps), m.decoder, rc.episode.tile_px);
    }
    if (!rc.query.empty()) input.query = rc.query;
    if (!rc.candidates.empty()) input.candidates = rc.candidates;
    if (rc.answer) input.correct = rc.answer;
    if (!o.query.empty()) input.query = o.query;
    if (!o.candidates.empty()) input.candidates = o.candidates;
    if (o.answer) input.correct = o.answer;
    if (input.query.empty()) throw ConfigError("no query: set 'query' in the config or pass --query");
    if (!pol) pol = std::make_unique<policy::RemotePolicy>(policy::EndpointConfig::from_env(rc.endpoint),
                                                           rc.episode.tokens);

    orchestrator::Episode ep(input, rc.episode, *pol);
    try {
        while (ep.should_continue()) ep.run_round();
    } catch (const TransportError& e) {
        std::cerr << "policy backend failed: " << e.what() << "\n";
    }
    const orchestrator::EpisodeResult result = ep.finish();

    fs::create_directories(rc.output_dir);
    json report = result.report_json();
    report["seed"] = rc.seed;
    report["policy"] = pol->name();
    write_text(rc.output_dir / "report.json", report.dump(2) + "\n");
    std::ostringstream trace;
    orchestrator::write_trace_jsonl(trace, result.trace);
    write_text(rc.output_dir / "trace.jsonl", trace.str());
    const auto root = ep.root_observation();
    write_png_file(rc.output_dir / "masked_root.png", root->grid.pixels->raster());
    if (auto pad = ep.scratchpad_image()) {
        write_png_file(rc.output_dir / "scratchpad.png", pad->raster());
    } else {
        write_png_file(rc.output_dir / "scratchpad.png", Raster(rc.episode.tile_px, rc.episode.tile_px));
    }

    out << fmt::format("answer={} correct={} rounds={} stop={} total_tokens={} hit_rate={:.3f} -> {}\n",
                       result.answer ? std::to_string(*result.answer) : "none",
                       result.correct ? (*result.correct ? "true" : "false") : "unknown", result.rounds,
                       orchestrator::to_string(result.stop_reason), result.total_tokens, result.cache_hit_rate,
                       rc.output_dir.string());
    return kExitOk;
}

// --- sweeps --------------------------------------------------------------------------------

int cmd_sweep_duration(std::vector<double> durations, int trials, const Base& base, double width,
                       const std::string& out_dir, std::ostream& out) {
    if (trials < 1) throw Exit{kExitConfig, "--trials must be positive"};
    if (durations.empty()) throw Exit{kExitConfig, "--durations is empty"};
    const auto sweep = bench::sweep_duration(durations, trials, base.seed, base.episode, width);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    metrics::write_scaling_csv(csv, sweep.points);
    write_text(fs::path(out_dir) / "scaling.csv", csv.str());

    const auto means = metrics::mean_by_duration(sweep.points);
    out << "duration_s  mean_total  mean_effective  hit_rate  captioner\n";
    for (const auto& p : means) {
        out << fmt::format("{:>10.0f}  {:>10.0f}  {:>14.0f}  {:>8.3f}  {:>9.0f}\n", p.duration_s, p.total_tokens,
                           p.effective_tokens, p.hit_rate, metrics::captioner_tokens(p.duration_s));
    }
    metrics::ScalingFit fit;
    try {
        fit = metrics::fit_scaling(sweep.points);
    } catch (const Error& e) {
        throw Exit{kExitConfig, fmt::format("fit refused: {}", e.what())};
    }
    const auto& lo = means.front();
    const auto& hi = means.back();
    out << fmt::format("r2_log={:.4f} r2_linear={:.4f} log_wins={}\n", fit.r2_log(), fit.r2_linear(),
                       fit.r2_log() > fit.r2_linear() ? "yes" : "no");
    out << fmt::format("tokens({:.0f})/tokens({:.0f})={:.3f}\n", hi.duration_s, lo.duration_s,
                       hi.total_tokens / lo.total_tokens);
    out << fmt::format("captioner/effective at {:.0f} s = {:.2f}x\n", hi.duration_s,
                       metrics::captioner_tokens(hi.duration_s) / hi.effective_tokens);
    return kExitOk;
}

int cmd_sweep_workers(const std::vector<int>& workers, int episodes, double duration, const Base& base,
                      std::ostream& out) {
    if (episodes < 1) throw Exit{kExitConfig, "--episodes must be positive"};
    const auto rows = bench::sweep_workers(workers, episodes, base.seed, duration, base.episode);
    out << "workers  worker_steps  critical_path  total_tokens  correct  same_evidence\n";
    for (const auto& r : rows) {
        out << fmt::format("{:>7}  {:>12}  {:>13}  {:>12}  {:>4}/{:<3}  {}\n", r.workers, r.worker_steps,
                           r.critical_path_steps, r.total_tokens, r.correct, r.episodes,
                           r.same_evidence ? "yes" : "no");
    }
    return kExitOk;
}

int cmd_sweep_depth(const std::vector<int>& caps, int episodes, double duration, double width, const Base& base,
                    std::ostream& out) {
    if (episodes < 1) throw Exit{kExitConfig, "--episodes must be positive"};
    const auto rows = bench::sweep_depth(caps, episodes, base.seed, duration, width, base.episode);
    out << fmt::format("duration {:.0f} s, event width {} s, sub-second depth {}\n", duration, width,
                       timeline::sub_second_depth(duration, base.episode.k));
    out << "max_depth  accuracy  localized  mean_tokens\n";
    bool monotone = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (i > 0 && rows[i - 1].max_depth <= r.max_depth && r.mean_tokens < rows[i - 1].mean_tokens) monotone = false;
        out << fmt::format("{:>9}  {:>7.1f}%  {:>8.1f}%  {:>11.0f}\n", r.max_depth, 100.0 * r.accuracy,
                           100.0 * r.localization, r.mean_tokens);
    }
    out << "tokens non-decreasing in depth cap: " << (monotone ? "yes" : "no") << "\n";
    return kExitOk;
}

// --- make-10h -------------------------------------------------------------------------------

struct InputSpec {
    fs::path video;
    double duration_s = 0.0;
    fs::path subtitles;
};

InputSpec parse_input(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3) {
        throw ConfigError(fmt::format("input '{}' must be VIDEO,DURATION_S[,SUBTITLES]", s));
    }
    InputSpec in;
    in.video = parts[0];
    try {
        std::size_t used = 0;
        in.duration_s = std::stod(parts[1], &used);
        if (used != parts[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("input '{}': duration '{}' is not a number", s, parts[1]));
    }
    if (!(in.duration_s > 0.0)) throw ConfigError(fmt::format("input '{}': duration must be positive", s));
    if (parts.size() == 3) in.subtitles = parts[2];
    return in;
}

int cmd_make_10h(const std::vector<std::string>& raw, std::size_t target, std::uint64_t seed,
                 std::optional<double> event_time, const std::string& out_dir, std::ostream& out) {
    std::vector<InputSpec> inputs;
    for (const auto& r : raw) inputs.push_back(parse_input(r));
    if (inputs.empty()) throw ConfigError("--inputs is empty");
    if (target >= inputs.size()) {
        throw ConfigError(fmt::format("--target-index {} out of range for {} inputs", target, inputs.size()));
    }
    for (const auto& in : inputs) {
        if (!fs::exists(in.video)) throw Exit{kExitMedia, fmt::format("media file not found: {}", in.video.string())};
        if (!in.subtitles.empty() && !fs::exists(in.subtitles)) {
            throw Exit{kExitMedia, fmt::format("subtitle file not found: {}", in.subtitles.string())};
        }
    }
    const auto order = bench::placement_order(inputs.size(), seed);
    std::vector<std::pair<std::string, double>> named;
    for (std::size_t i : order) named.emplace_back(inputs[i].video.string(), inputs[i].duration_s);
    const auto layout = media::ConcatSource::from_durations(named);

    std::vector<media::SubtitleTrack> tracks;
    json segs = json::array();
    std::size_t target_pos = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto& in = inputs[order[pos]];
        const auto& seg = layout.segments()[pos];
        if (order[pos] == target) target_pos = pos;
        if (!in.subtitles.empty()) tracks.push_back({media::parse_srt(read_file(in.subtitles)).cues, seg.offset_s});
        segs.push_back({{"input_index", order[pos]},
                        {"source", seg.source_id},
                        {"offset_s", seg.offset_s},
                        {"duration_s", seg.duration_s},
                        {"subtitles", in.subtitles.string()}});
    }
    const auto merged = media::merge_subtitles(tracks);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_text(dir / "concat.json", json{{"seed", seed}, {"total_s", layout.total_s()}, {"segments", segs}}.dump(2) + "\n");
    write_text(dir / "merged.srt", media::serialize_srt(merged));
    const auto& tseg = layout.segments()[target_pos];
    json key{{"target_index", target},
             {"target_source", tseg.source_id},
             {"target_position", target_pos},
             {"offset_s", tseg.offset_s},
             {"duration_s", tseg.duration_s}};
    if (event_time) {
        if (*event_time < 0.0 || *event_time >= tseg.duration_s) {
            throw ConfigError(fmt::format("--event-time {} outside the target's [0, {})", *event_time, tseg.duration_s));
        }
        key["event_local_s"] = *event_time;
        key["event_global_s"] = layout.to_global(target_pos, *event_time);
    }
    write_text(dir / "answer_key.json", key.dump(2) + "\n");
    out << fmt::format("{} segments, {:.1f} s total; target input {} at position {} (offset {:.3f} s); {} cues\n",
                       inputs.size(), layout.total_s(), target, target_pos, tseg.offset_s, merged.size());
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical-grid video exploration with a Master-Worker policy loop."};
    app.name("videoatlas");
    app.require_subcommand(1);

    RunOptions run_opts;
    int answer = -1;
    auto* run = app.add_subcommand("run", "Run one episode and write report, trace and PNG artifacts");
    run->add_option("config", run_opts.config, "Run config (JSON)")->required();
    run->add_option("--query", run_opts.query, "Question (overrides the config)");
    run->add_option("--candidates", run_opts.candidates, "Answer choices (override the config)");
    run->add_option("--answer", answer, "Index of the correct choice, for scoring");
    run->add_option("--output-dir", run_opts.output_dir, "Output directory (overrides the config)");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";

    std::vector<double> durations{60, 600, 3600, 36000};
    int trials = 10;
    double width = 1.0;
    auto* sd = app.add_subcommand("sweep-duration", "Token cost against video duration");
    sd->add_option("--durations", durations)->delimiter(',');
    sd->add_option("--trials", trials);
    sd->add_option("--event-width", width);

    std::vector<int> workers{1, 3, 5, 7};
    int episodes = 5;
    double duration = 3600;
    auto* sw = app.add_subcommand("sweep-workers", "Steps and evidence against worker count");
    sw->add_option("--workers", workers)->delimiter(',');
    sw->add_option("--episodes", episodes);
    sw->add_option("--duration", duration);

    std::vector<int> caps{0, 1, 2, 3};
    int depth_episodes = 10;
    double depth_duration = 36000;
    double depth_width = 0.2;
    auto* sdp = app.add_subcommand("sweep-depth", "Accuracy and tokens against the depth cap");
    sdp->add_option("--max-depths", caps)->delimiter(',');
    sdp->add_option("--episodes", depth_episodes);
    sdp->add_option("--duration", depth_duration);
    sdp->add_option("--event-width", depth_width);

    for (auto* sub : {sd, sw, sdp}) {
        sub->add_option("--config", config_path, "Run config supplying episode settings");
        sub->add_option("--seed", seed);
    }
    sd->add_option("--out", out_dir, "Directory for scaling.csv");

    std::vector<std::string> inputs;
    std::size_t target = 0;
    std::optional<double> event_time;
    std::uint64_t concat_seed = 0;
    std::string concat_out = "concat";
    auto* mk = app.add_subcommand("make-10h", "Concatenate inputs around a target with merged subtitles");
    mk->add_option("--inputs", inputs, "VIDEO,DURATION_S[,SUBTITLES] per input")->required();
    mk->add_option("--target-index", target)->required();
    mk->add_option("--seed", concat_seed);
    mk->add_option("--event-time", event_time, "Event time inside the target, recorded in the answer key");
    mk->add_option("--out", concat_out);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*run) {
            if (answer >= 0) run_opts.answer = answer;
            return cmd_run(run_opts, out);
        }
        if (*sd) return cmd_sweep_duration(durations, trials, load_base(config_path, seed), width, out_dir, out);
        if (*sw) return cmd_sweep_workers(workers, episodes, duration, load_base(config_path, seed), out);
        if (*sdp) return cmd_sweep_depth(caps, depth_episodes, depth_duration, depth_width, load_base(config_path, seed), out);
        if (*mk) return cmd_make_10h(inputs, target, concat_seed, event_time, concat_out, out);
    } catch (const Exit& e) {
        err << e.message << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MediaError& e) {
        err << "media error: " << e.what() << "\n";
        return kExitMedia;
    } catch (const EnvironmentError& e) {
        err << "environment error: " << e.what() << "\n";
        return kExitMedia;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace atlas::cli
