#pragma once

#include <string>
#include <utility>
#include <vector>

namespace atlas::timeline {

/// Duration and nominal frame rate of a video.
struct VideoSpan {
    double duration_s = 0.0;
    double fps = 25.0;

    /// Throws AddressError unless both fields are strictly positive.
    static VideoSpan make(double duration_s, double fps);
    double frame_count() const { return duration_s * fps; }
};

/// Half-open interval [start_s, end_s) in seconds.
struct Interval {
    double start_s = 0.0;
    double end_s = 0.0;

    double width() const { return end_s - start_s; }
    double midpoint() const { return start_s + 0.5 * (end_s - start_s); }
    bool contains(double t) const { return t >= start_s && t < end_s; }
    bool overlaps(const Interval& o) const { return start_s < o.end_s && o.start_s < end_s; }
    bool contains(const Interval& o) const { return o.start_s >= start_s && o.end_s <= end_s; }

    friend bool operator==(const Interval&, const Interval&) = default;
};

std::string to_string(const Interval& iv);

/// Path through the K x K hierarchy. The empty path is the root grid.
class CellAddress {
public:
    CellAddress() = default;
    explicit CellAddress(int grid_k, std::vector<int> path = {});

    int grid_k() const { return grid_k_; }
    int cells_per_grid() const { return grid_k_ * grid_k_; }
    const std::vector<int>& path() const { return path_; }
    int depth() const { return static_cast<int>(path_.size()); }
    bool is_root() const { return path_.empty(); }

    CellAddress child(int index) const;
    CellAddress parent() const;
    int last() const;

    /// "r" for the root, otherwise indices joined by '.', e.g. "12.3".
    std::string to_string() const;

    friend bool operator==(const CellAddress&, const CellAddress&) = default;
    friend bool operator<(const CellAddress& a, const CellAddress& b) { return a.path_ < b.path_; }

private:
    int grid_k_ = 8;
    std::vector<int> path_;
};

/// Row-major index <-> (row, col), left-to-right then top-to-bottom.
std::pair<int, int> row_col(int index, int k);
int index_of(int row, int col, int k);

/// index-th of k*k equal parts of `parent`. The last part ends exactly at
/// parent.end_s so partitions never leave a rounding gap.
Interval child_interval(const Interval& parent, int k, int index);

/// All k*k parts of `parent` in row-major order.
std::vector<Interval> split_interval(const Interval& parent, int k);

Interval root_interval(const VideoSpan& span);

Interval cell_interval(const VideoSpan& span, const CellAddress& addr);

/// Per-cell span at depth d: T / K^(2(d+1)).
double depth_resolution(double duration_s, int k, int d);
double depth_resolution(const VideoSpan& span, int k, int d);

/// ceil(log_{K^2}(T * fps)); the number of Expand steps that reach a single frame.
int max_depth(const VideoSpan& span, int k);

/// Smallest d >= 0 whose per-cell span is at most one second.
int sub_second_depth(double duration_s, int k);
int sub_second_depth(const VideoSpan& span, int k);

struct ChildCell {
    CellAddress address;
    Interval interval;
    double midpoint_s = 0.0;
};

std::vector<ChildCell> expand_children(const VideoSpan& span, const CellAddress& addr);

/// Address of the depth-`depth` cell containing t (t clamped into [0, T)).
CellAddress locate(const VideoSpan& span, int k, double t, int depth);

/// Deepest cell (at most `depth_limit` levels down) whose interval contains
/// all of `range`. Returns the root when the range straddles root cells.
CellAddress deepest_containing(const VideoSpan& span, int k, const Interval& range, int depth_limit);

/// Frame index containing t: floor(t * fps).
long long frame_index(double t, double fps);

/// Nearest frame boundary: floor(t * fps + 0.5) / fps.
double snap_to_frame(double t, double fps);

}  // namespace atlas::timeline
