#pragma once

// Event-rate series: events per second in fixed-width bins anchored at
// the stream start, and the robust percentile normalization that maps a
// raw series into [0, 1] while clipping outlier bins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "evtad/events.hpp"

namespace evtad {

struct RateConfig {
    double bin_width = 0.033;  // seconds
    double percentile = 1.0;   // robust clip percentile; 0 = plain min/max
};

struct RateSeries {
    std::vector<double> values;  // events per second, one per bin
    double bin_width = 0.0;      // seconds
    std::int64_t t0_us = 0;      // timestamp of the first bin start
    bool normalized = false;

    double t0_sec() const { return static_cast<double>(t0_us) * 1e-6; }
    double t_end_sec() const {
        return t0_sec() + static_cast<double>(values.size()) * bin_width;
    }
};

// Bins cover [t_begin, t_end]; the final bin may be partially filled but
// is divided by the nominal width, so sum(values) * bin_width equals the
// total event count.  Polarity is ignored.  An empty or zero-duration
// stream yields a single zero bin.
inline RateSeries event_rate(const EventStream& s, double bin_width_sec) {
    if (bin_width_sec <= 0.0)
        throw std::invalid_argument("event_rate: bin width must be positive");
    RateSeries r;
    r.bin_width = bin_width_sec;
    r.t0_us = s.t_begin;
    r.values.assign(covering_bin_count(s.t_begin, s.t_end, bin_width_sec), 0.0);
    for (const Event& e : s.events)
        r.values[bin_index(e.t, s.t_begin, bin_width_sec)] += 1.0;
    for (double& v : r.values) v /= bin_width_sec;
    return r;
}

// Nearest-rank percentile of an ascending-sorted vector:
// the value at rank ceil(q/100 * n), clamped to [1, n].
inline double percentile_nearest_rank(const std::vector<double>& sorted, double q) {
    if (sorted.empty())
        throw std::invalid_argument("percentile_nearest_rank: empty input");
    if (q < 0.0 || q > 100.0)
        throw std::invalid_argument("percentile_nearest_rank: q outside [0, 100]");
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
    rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
    return sorted[rank - 1];
}

// (value - lo) / (hi - lo) clipped into [0, 1], where lo and hi are the
// p-th and (100-p)-th nearest-rank percentiles of the series.  p = 0
// degrades to plain min/max scaling.  A degenerate series (hi == lo)
// maps to all zeros rather than dividing by zero.
inline RateSeries robust_normalize(const RateSeries& r, double percentile) {
    if (r.normalized)
        throw std::invalid_argument("robust_normalize: series already normalized");
    if (r.values.empty())
        throw std::invalid_argument("robust_normalize: empty series");
    if (percentile < 0.0 || percentile >= 50.0)
        throw std::invalid_argument("robust_normalize: percentile must be in [0, 50)");

    std::vector<double> sorted = r.values;
    std::sort(sorted.begin(), sorted.end());
    const double lo = percentile_nearest_rank(sorted, percentile);
    const double hi = percentile_nearest_rank(sorted, 100.0 - percentile);

    RateSeries out;
    out.bin_width = r.bin_width;
    out.t0_us = r.t0_us;
    out.normalized = true;
    out.values.resize(r.values.size());
    if (hi <= lo) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        const double v = (r.values[i] - lo) / span;
        out.values[i] = std::min(1.0, std::max(0.0, v));
    }
    return out;
}

}  // namespace evtad
