#include "videoatlas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <fmt/format.h>

#include "videoatlas/error.hpp"
#include "videoatlas/hash.hpp"

namespace atlas::metrics {

void TokenModel::validate() const {
    if (image_patch_px <= 0 || text_bytes_per_token <= 0) {
        throw ConfigError("token model sizes must be positive");
    }
}

long long image_tokens(int width, int height, const TokenModel& m) {
    const long long p = m.image_patch_px;
    return ((width + p - 1) / p) * ((height + p - 1) / p);
}

long long text_tokens(std::string_view text, const TokenModel& m) {
    const long long b = m.text_bytes_per_token;
    return (static_cast<long long>(text.size()) + b - 1) / b;
}

long long count_tokens(const policy::PolicyRequest& request, const TokenModel& m) {
    long long n = text_tokens(request.text, m);
    for (const auto& img : request.images) {
        if (img) n += image_tokens(img->width(), img->height(), m);
    }
    return n;
}

std::vector<std::uint64_t> token_stream(const policy::PolicyRequest& request, const TokenModel& m) {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(count_tokens(request, m)));
    for (const auto& img : request.images) {
        if (!img) continue;
        const auto& ph = img->patch_hashes(m.image_patch_px);
        out.insert(out.end(), ph.begin(), ph.end());
    }
    const std::string_view text = request.text;
    const auto step = static_cast<std::size_t>(m.text_bytes_per_token);
    for (std::size_t i = 0; i < text.size(); i += step) {
        out.push_back(mix64(fnv1a(text.substr(i, step), 0x7465787400000000ULL)));
    }
    return out;
}

CacheSim::CacheSim(int block_tokens) : block_(block_tokens) {
    if (block_ <= 0) throw ConfigError("cache block size must be positive");
}

CacheStep CacheSim::step(std::span<const std::uint64_t> stream) {
    // Chain hashes are computed outside the lock; only the lookups are serialized.
    const std::size_t nblocks = stream.size() / static_cast<std::size_t>(block_);
    std::vector<std::uint64_t> chain(nblocks);
    std::uint64_t h = kFnvOffset;
    for (std::size_t b = 0; b < nblocks; ++b) {
        std::uint64_t bh = 0x626c6f636bULL;
        for (int i = 0; i < block_; ++i) bh = hash_combine(bh, stream[b * static_cast<std::size_t>(block_) + i]);
        h = hash_combine(h, bh);
        chain[b] = h;
    }

    CacheStep r;
    std::lock_guard lock(mu_);
    bool matching = true;
    for (auto node : chain) {
        if (matching && seen_.contains(node)) {
            r.hit_tokens += block_;
        } else {
            matching = false;
            seen_.insert(node);
            r.miss_tokens += block_;
        }
    }
    r.miss_tokens += static_cast<long long>(stream.size() % static_cast<std::size_t>(block_));
    hits_ += r.hit_tokens;
    total_ += r.hit_tokens + r.miss_tokens;
    return r;
}

CacheStep CacheSim::step(const policy::PolicyRequest& request, const TokenModel& m) {
    const auto stream = token_stream(request, m);
    return step(stream);
}

long long CacheSim::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

long long CacheSim::total() const {
    std::lock_guard lock(mu_);
    return total_;
}

double CacheSim::hit_rate() const {
    std::lock_guard lock(mu_);
    if (total_ == 0) throw Error("hit rate undefined: no tokens recorded");
    return static_cast<double>(hits_) / static_cast<double>(total_);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("line fit needs at least two paired samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0) throw Error("line fit: predictor has no spread");
    LineFit f;
    f.b = sxy / sxx;
    f.a = my - f.b * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (f.a + f.b * x[i]);
        ss_res += e * e;
    }
    if (syy > 0.0) {
        f.r2 = 1.0 - ss_res / syy;
    } else {
        f.r2 = ss_res <= 0.0 ? 1.0 : 0.0;
    }
    return f;
}

double ScalingFit::tokens_at(double duration_s) const { return log_fit.a + log_fit.b * std::log(duration_s); }

std::vector<ScalingPoint> mean_by_duration(const std::vector<ScalingPoint>& points) {
    std::map<double, std::pair<ScalingPoint, int>> acc;
    for (const auto& p : points) {
        auto& [sum, n] = acc[p.duration_s];
        sum.duration_s = p.duration_s;
        sum.total_tokens += p.total_tokens;
        sum.effective_tokens += p.effective_tokens;
        sum.hit_rate += p.hit_rate;
        ++n;
    }
    std::vector<ScalingPoint> out;
    for (auto& [d, v] : acc) {
        auto [s, n] = v;
        s.total_tokens /= n;
        s.effective_tokens /= n;
        s.hit_rate /= n;
        out.push_back(s);
    }
    return out;
}

ScalingFit fit_scaling(const std::vector<ScalingPoint>& points) {
    const auto means = mean_by_duration(points);
    if (means.size() < 4) {
        throw Error(fmt::format("scaling fit needs at least 4 distinct durations, got {}", means.size()));
    }
    std::vector<double> t;
    std::vector<double> logt;
    std::vector<double> y;
    for (const auto& p : means) {
        if (!(p.duration_s > 0.0)) throw Error("scaling fit: durations must be positive");
        t.push_back(p.duration_s);
        logt.push_back(std::log(p.duration_s));
        y.push_back(p.effective_tokens);
    }
    ScalingFit f;
    f.log_fit = fit_line(logt, y);
    f.linear_fit = fit_line(t, y);
    return f;
}

double captioner_tokens(double duration_s, double tokens_per_second) { return duration_s * tokens_per_second; }

void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points) {
    out << "duration_s,total_tokens,effective_tokens,hit_rate\n";
    for (const auto& p : points) {
        out << fmt::format("{},{},{},{:.6f}\n", p.duration_s, p.total_tokens, p.effective_tokens, p.hit_rate);
    }
}

}  // namespace atlas::metrics
