#pragma once

// Time intervals on the recording clock (seconds), temporal IoU, and
// the greedy non-maximum suppression shared by proposal and detection
// post-processing.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace evtad {

struct Interval {
    double t_start = 0.0;  // seconds
    double t_end = 0.0;    // seconds, > t_start

    double duration() const { return t_end - t_start; }
};

inline void validate_interval(const Interval& i, const char* what) {
    if (!(i.t_end > i.t_start))
        throw std::invalid_argument(std::string(what) +
                                    ": interval must satisfy t_end > t_start");
}

// Temporal intersection-over-union of two intervals.  Returns a value
// in [0, 1]; 0 when the intervals are disjoint or merely touch.
inline double tiou(const Interval& a, const Interval& b) {
    const double inter =
        std::max(0.0, std::min(a.t_end, b.t_end) - std::max(a.t_start, b.t_start));
    const double uni = a.duration() + b.duration() - inter;
    return inter > 0.0 ? inter / uni : 0.0;
}

// A scored, labeled interval attached to one region of interest.
struct Detection {
    std::string roi_id;
    Interval interval;
    double score = 0.0;  // in [0, 1]
    std::string label;
};

// Greedy NMS over any item type. `precede` must be a deterministic
// strict weak ordering that puts the item to keep first; `get` maps an
// item to its interval. An item is kept iff its tIoU with every
// already-kept item is strictly below `thr`.
template <typename T, typename GetInterval, typename Precede>
std::vector<T> greedy_nms(std::vector<T> items, double thr, GetInterval get,
                          Precede precede) {
    if (thr <= 0.0 || thr > 1.0)
        throw std::invalid_argument("greedy_nms: threshold must be in (0, 1]");
    std::stable_sort(items.begin(), items.end(), precede);
    std::vector<T> kept;
    kept.reserve(items.size());
    for (auto& it : items) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (tiou(get(it), get(k)) >= thr) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(it));
    }
    return kept;
}

// Detection ordering used for NMS and ranking: higher score first,
// then longer, then earlier, then roi id as a final deterministic key.
inline bool detection_precedes(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.duration() != b.interval.duration())
        return a.interval.duration() > b.interval.duration();
    if (a.interval.t_start != b.interval.t_start)
        return a.interval.t_start < b.interval.t_start;
    return a.roi_id < b.roi_id;
}

inline std::vector<Detection> detection_nms(std::vector<Detection> dets,
                                            double thr) {
    return greedy_nms(
        std::move(dets), thr, [](const Detection& d) { return d.interval; },
        detection_precedes);
}

}  // namespace evtad
