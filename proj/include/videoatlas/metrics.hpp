#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "videoatlas/request.hpp"

namespace atlas::metrics {

/// Stand-in tokenizer: one token per image patch, one per few text bytes.
struct TokenModel {
    int image_patch_px = 28;
    int text_bytes_per_token = 4;
    /// Throws ConfigError unless both are positive.
    void validate() const;
};

long long image_tokens(int width, int height, const TokenModel& m = {});
long long text_tokens(std::string_view text, const TokenModel& m = {});
long long count_tokens(const policy::PolicyRequest& request, const TokenModel& m = {});

/// Per-token hashes of a request as the model would see it: every image's
/// patches in raster order, then the text in byte chunks. Its length always
/// equals count_tokens().
std::vector<std::uint64_t> token_stream(const policy::PolicyRequest& request, const TokenModel& m = {});

struct CacheStep {
    long long hit_tokens = 0;
    long long miss_tokens = 0;
};

/// Automatic prefix caching over fixed-size token blocks. A block hits when
/// the whole chain of blocks before it, and itself, was seen in an earlier
/// request. A trailing partial block never hits. Thread-safe.
class CacheSim {
public:
    explicit CacheSim(int block_tokens = 16);

    CacheStep step(std::span<const std::uint64_t> stream);
    CacheStep step(const policy::PolicyRequest& request, const TokenModel& m = {});

    int block_tokens() const { return block_; }
    long long hits() const;
    long long total() const;
    /// hits / total; throws Error when nothing has been recorded.
    double hit_rate() const;

private:
    int block_;
    mutable std::mutex mu_;
    std::unordered_set<std::uint64_t> seen_;
    long long hits_ = 0;
    long long total_ = 0;
};

struct ScalingPoint {
    double duration_s = 0.0;
    double total_tokens = 0.0;
    double effective_tokens = 0.0;  // tokens not served from the prefix cache
    double hit_rate = 0.0;
};

struct LineFit {
    double a = 0.0;  // intercept
    double b = 0.0;  // slope
    double r2 = 0.0;
};

/// Ordinary least squares y = a + b x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct ScalingFit {
    LineFit log_fit;     // tokens = a + b ln T
    LineFit linear_fit;  // tokens = a + b T
    double r2_log() const { return log_fit.r2; }
    double r2_linear() const { return linear_fit.r2; }
    double tokens_at(double duration_s) const;  // from the log fit
};

/// Fits effective tokens against duration. Repeated durations are averaged
/// first; needs at least four distinct positive durations, else throws Error.
ScalingFit fit_scaling(const std::vector<ScalingPoint>& points);

/// Per-duration means, ordered by duration.
std::vector<ScalingPoint> mean_by_duration(const std::vector<ScalingPoint>& points);

inline constexpr double kCaptionTokensPerSecond = 39.0;

/// Dense-captioning baseline: tokens grow linearly with duration.
double captioner_tokens(double duration_s, double tokens_per_second = kCaptionTokensPerSecond);

/// duration_s,total_tokens,effective_tokens,hit_rate
void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points);

}  // namespace atlas::metrics
