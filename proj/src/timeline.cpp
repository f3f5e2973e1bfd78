#include "videoatlas/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::timeline {

VideoSpan VideoSpan::make(double duration_s, double fps) {
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
        throw AddressError(fmt::format("video duration must be positive, got {}", duration_s));
    }
    if (!(fps > 0.0) || !std::isfinite(fps)) {
        throw AddressError(fmt::format("fps must be positive, got {}", fps));
    }
    return VideoSpan{duration_s, fps};
}

std::string to_string(const Interval& iv) {
    return fmt::format("[{:.3f}, {:.3f})", iv.start_s, iv.end_s);
}

CellAddress::CellAddress(int grid_k, std::vector<int> path) : grid_k_(grid_k), path_(std::move(path)) {
    if (grid_k_ < 2) throw AddressError(fmt::format("grid size K must be >= 2, got {}", grid_k_));
    const int n = grid_k_ * grid_k_;
    for (int idx : path_) {
        if (idx < 0 || idx >= n) {
            throw AddressError(fmt::format("cell index {} out of range [0, {})", idx, n));
        }
    }
}

CellAddress CellAddress::child(int index) const {
    auto p = path_;
    p.push_back(index);
    return CellAddress(grid_k_, std::move(p));
}

CellAddress CellAddress::parent() const {
    if (path_.empty()) throw AddressError("root address has no parent");
    auto p = path_;
    p.pop_back();
    return CellAddress(grid_k_, std::move(p));
}

int CellAddress::last() const {
    if (path_.empty()) throw AddressError("root address has no last index");
    return path_.back();
}

std::string CellAddress::to_string() const {
    if (path_.empty()) return "r";
    std::string out;
    for (std::size_t i = 0; i < path_.size(); ++i) {
        if (i) out += '.';
        out += std::to_string(path_[i]);
    }
    return out;
}

std::pair<int, int> row_col(int index, int k) { return {index / k, index % k}; }

int index_of(int row, int col, int k) { return row * k + col; }

Interval child_interval(const Interval& parent, int k, int index) {
    const int n = k * k;
    if (index < 0 || index >= n) {
        throw AddressError(fmt::format("cell index {} out of range [0, {})", index, n));
    }
    const double w = parent.width();
    const double start = parent.start_s + w * index / n;
    const double end = (index == n - 1) ? parent.end_s : parent.start_s + w * (index + 1) / n;
    return {start, end};
}

std::vector<Interval> split_interval(const Interval& parent, int k) {
    const int n = k * k;
    std::vector<Interval> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(child_interval(parent, k, i));
    return out;
}

Interval root_interval(const VideoSpan& span) { return {0.0, span.duration_s}; }

Interval cell_interval(const VideoSpan& span, const CellAddress& addr) {
    Interval iv = root_interval(span);
    for (int idx : addr.path()) iv = child_interval(iv, addr.grid_k(), idx);
    return iv;
}

double depth_resolution(double duration_s, int k, int d) {
    return duration_s / std::pow(static_cast<double>(k), 2.0 * (d + 1));
}

double depth_resolution(const VideoSpan& span, int k, int d) {
    return depth_resolution(span.duration_s, k, d);
}

int max_depth(const VideoSpan& span, int k) {
    // Integer search instead of log() so exact powers (64, 4096, ...) land on
    // the right side of the ceiling.
    const double frames = span.frame_count();
    const double base = static_cast<double>(k) * k;
    int d = 0;
    double reach = 1.0;
    while (reach * (1.0 + 1e-12) < frames) {
        reach *= base;
        ++d;
    }
    return d;
}

int sub_second_depth(double duration_s, int k) {
    int d = 0;
    while (depth_resolution(duration_s, k, d) > 1.0 + 1e-12) ++d;
    return d;
}

int sub_second_depth(const VideoSpan& span, int k) { return sub_second_depth(span.duration_s, k); }

std::vector<ChildCell> expand_children(const VideoSpan& span, const CellAddress& addr) {
    const Interval parent = cell_interval(span, addr);
    const int n = addr.cells_per_grid();
    std::vector<ChildCell> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Interval iv = child_interval(parent, addr.grid_k(), i);
        out.push_back({addr.child(i), iv, iv.midpoint()});
    }
    return out;
}

CellAddress locate(const VideoSpan& span, int k, double t, int depth) {
    t = std::clamp(t, 0.0, std::nextafter(span.duration_s, 0.0));
    CellAddress addr(k);
    Interval iv = root_interval(span);
    const int n = k * k;
    for (int level = 0; level < depth; ++level) {
        int idx = static_cast<int>((t - iv.start_s) / iv.width() * n);
        idx = std::clamp(idx, 0, n - 1);
        // Floating division can land one cell off near a boundary; settle it
        // against the exact interval arithmetic.
        while (idx > 0 && t < child_interval(iv, k, idx).start_s) --idx;
        while (idx < n - 1 && t >= child_interval(iv, k, idx).end_s) ++idx;
        addr = addr.child(idx);
        iv = child_interval(iv, k, idx);
    }
    return addr;
}

CellAddress deepest_containing(const VideoSpan& span, int k, const Interval& range, int depth_limit) {
    CellAddress addr(k);
    Interval iv = root_interval(span);
    const int n = k * k;
    for (int level = 0; level < depth_limit; ++level) {
        bool found = false;
        for (int i = 0; i < n; ++i) {
            Interval c = child_interval(iv, k, i);
            if (c.contains(range)) {
                addr = addr.child(i);
                iv = c;
                found = true;
                break;
            }
        }
        if (!found) break;
    }
    return addr;
}

long long frame_index(double t, double fps) { return static_cast<long long>(std::floor(t * fps)); }

double snap_to_frame(double t, double fps) { return std::floor(t * fps + 0.5) / fps; }

}  // namespace atlas::timeline
