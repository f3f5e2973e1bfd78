#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "videoatlas/bench.hpp"
#include "videoatlas/orchestrator.hpp"
#include "videoatlas/policy.hpp"

namespace atlas::config {

inline constexpr int kConfigVersion = 1;

struct MediaConfig {
    std::filesystem::path video;
    std::filesystem::path subtitles;  // optional .srt
    double duration_s = 0.0;
    double fps = 25.0;
    std::string decoder = "atlas-decode-ffmpeg";
};

enum class Backend { Oracle, Remote };

/// One run document. EpisodeConfig fields sit at the top level next to the
/// media, policy and output settings.
struct RunConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 0;
    orchestrator::EpisodeConfig episode;
    std::optional<MediaConfig> media;
    std::optional<bench::NeedleSpec> synthetic;
    Backend backend = Backend::Oracle;
    policy::EndpointConfig endpoint;
    std::filesystem::path output_dir = "out";
    std::string query;
    std::vector<std::string> candidates;
    std::optional<int> answer;

    /// Cross-field checks; throws ConfigError.
    void validate() const;
};

/// Throws ConfigError naming the offending key on unknown keys, wrong types or
/// a version mismatch. Relative media paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& c);

}  // namespace atlas::config
