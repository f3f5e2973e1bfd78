#include "videoatlas/policy.hpp"

#include <cstdlib>
#include <thread>
#include <fmt/format.h>
#include <httplib.h>

#include "videoatlas/error.hpp"

namespace atlas::policy {

using nlohmann::json;

EndpointConfig EndpointConfig::from_env() { return from_env(EndpointConfig{}); }

EndpointConfig EndpointConfig::from_env(EndpointConfig base) {
    if (base.url.empty()) {
        if (const char* v = std::getenv("ATLAS_ENDPOINT")) base.url = v;
    }
    if (base.api_key.empty()) {
        if (const char* v = std::getenv("ATLAS_API_KEY")) base.api_key = v;
    }
    return base;
}

RemotePolicy::RemotePolicy(EndpointConfig config, metrics::TokenModel tokens)
    : config_(std::move(config)), tokens_(tokens) {
    const std::string& url = config_.url;
    if (url.empty()) throw ConfigError("remote policy needs an endpoint URL (config or ATLAS_ENDPOINT)");
    if (url.rfind("https://", 0) == 0) {
        throw ConfigError("https endpoints are not supported by this build; use a local http proxy");
    }
    if (url.rfind("http://", 0) != 0) throw ConfigError(fmt::format("endpoint '{}' is not an http:// URL", url));
    const auto slash = url.find('/', 7);
    scheme_host_port_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    if (config_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

json RemotePolicy::request_body(const PolicyRequest& request, const EndpointConfig& config) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", request.text}});
    for (const auto& img : request.images) {
        if (!img) continue;
        content.push_back({{"type", "image"}, {"data_base64_png", base64_encode(encode_png(img->raster()))}});
    }
    return json{{"model", config.model},
                {"messages", json::array({json{{"role", "user"}, {"content", content}}})},
                {"max_tokens", config.max_tokens}};
}

PolicyResponse RemotePolicy::decide(const PolicyRequest& request) {
    const std::string body = request_body(request, config_).dump();
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
        httplib::Client cli(scheme_host_port_);
        cli.set_connection_timeout(config_.timeout);
        cli.set_read_timeout(config_.timeout);
        cli.set_write_timeout(config_.timeout);
        auto res = cli.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = fmt::format("HTTP {}", res->status);
            if (res->status >= 400 && res->status < 500 && res->status != 429) break;
            continue;
        }
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j.at("text").is_string()) {
            last_error = "response is not {\"text\": ...}";
            continue;
        }
        PolicyResponse out;
        out.raw_text = j.at("text").get<std::string>();
        const json usage = j.value("usage", json());
        if (usage.is_object() && usage.contains("input_tokens") && usage.contains("output_tokens") &&
            usage.at("input_tokens").is_number_integer() && usage.at("output_tokens").is_number_integer()) {
            out.tokens_in = usage.at("input_tokens").get<long long>();
            out.tokens_out = usage.at("output_tokens").get<long long>();
            out.usage_estimated = false;
        } else {
            out.tokens_in = metrics::count_tokens(request, tokens_);
            out.tokens_out = metrics::text_tokens(out.raw_text, tokens_);
        }
        return out;
    }
    throw TransportError(fmt::format("{}{}: {} (after {} attempt(s))", scheme_host_port_, path_, last_error,
                                     config_.max_attempts));
}

}  // namespace atlas::policy
