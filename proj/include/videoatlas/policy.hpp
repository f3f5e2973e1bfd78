#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "videoatlas/media.hpp"
#include "videoatlas/metrics.hpp"
#include "videoatlas/request.hpp"

namespace atlas::policy {

/// What the scripted oracle knows about a synthetic episode.
struct OracleKnowledge {
    std::vector<media::PlantedEvent> events;  // the targets of the question
    double duration_s = 0.0;
};

/// Deterministic stand-in for the VLM. Navigation reads the structured request
/// context; perception reads pixels (the marker strip of a zoomed frame or a
/// grid tile), so a coarse view that misses the glyph really misses it.
class OraclePolicy final : public Policy {
public:
    explicit OraclePolicy(OracleKnowledge knowledge, metrics::TokenModel tokens = {});
    PolicyResponse decide(const PolicyRequest& request) override;
    std::string name() const override { return "oracle"; }

    std::string decide_text(const PolicyRequest& request) const;

private:
    std::string search_task(const PolicyRequest& r) const;
    std::string probe(const PolicyRequest& r) const;
    std::string worker(const PolicyRequest& r) const;
    std::string uncertainty(const PolicyRequest& r) const;
    std::string final_answer(const PolicyRequest& r) const;

    OracleKnowledge know_;
    metrics::TokenModel tokens_;
};

/// "glyph K visible" / "no glyph visible", the oracle's perception vocabulary.
std::string describe_glyph(std::optional<int> glyph);
/// Inverse of describe_glyph for the positive case.
std::optional<int> glyph_from_description(const std::string& description);

struct EndpointConfig {
    std::string url;  // http://host:port/path
    std::string api_key;
    std::string model = "default";
    int max_tokens = 1024;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::seconds timeout{120};

    /// Fills url and api_key from ATLAS_ENDPOINT / ATLAS_API_KEY when unset.
    static EndpointConfig from_env(EndpointConfig base);
    static EndpointConfig from_env();
};

/// Chat-style HTTP backend. Each request carries the prompt text followed by
/// the images as base64 PNG parts. Safe for concurrent use.
class RemotePolicy final : public Policy {
public:
    explicit RemotePolicy(EndpointConfig config, metrics::TokenModel tokens = {});
    PolicyResponse decide(const PolicyRequest& request) override;
    std::string name() const override { return "remote"; }

    /// Request body as sent on the wire.
    static nlohmann::json request_body(const PolicyRequest& request, const EndpointConfig& config);

private:
    EndpointConfig config_;
    metrics::TokenModel tokens_;
    std::string scheme_host_port_;
    std::string path_;
};

}  // namespace atlas::policy
