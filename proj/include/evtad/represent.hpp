#pragma once

// Dense 2D snapshots of an event stream around a timestamp: windowed
// event-count histograms and exponential-decay time maps, plus the
// corner-aligned bilinear resize that brings either to the encoder's
// input size.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "evtad/events.hpp"

namespace evtad {

enum class GridKind { histogram, timemap };

struct Grid {
    std::vector<double> values;  // row-major, h * w
    int h = 0;
    int w = 0;
    double t_center = 0.0;  // seconds
    GridKind kind = GridKind::histogram;

    double at(int y, int x) const {
        return values[static_cast<std::size_t>(y) * w + x];
    }
    double& at(int y, int x) {
        return values[static_cast<std::size_t>(y) * w + x];
    }
};

struct RepresentConfig {
    GridKind kind = GridKind::histogram;
    double window = 1.0;  // histogram window width, seconds
    double tau = 0.2;     // time-map decay constant, seconds
    int out_h = 32;       // encoder input size after resize
    int out_w = 32;
};

namespace detail {

// First event with t >= t_us (fractional microsecond bounds are fine:
// the comparison is done in double).
inline std::size_t first_event_at_or_after(const std::vector<Event>& ev, double t_us) {
    std::size_t lo = 0, hi = ev.size();
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (static_cast<double>(ev[mid].t) < t_us)
            lo = mid + 1;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace detail

// Per-pixel event counts in the half-open window
// [t_center - window/2, t_center + window/2).  Polarity is ignored.
// A window that misses the stream entirely simply yields a zero grid.
inline Grid event_histogram(const EventStream& s, double t_center, double window) {
    if (window <= 0.0)
        throw std::invalid_argument("event_histogram: window must be positive");
    Grid g;
    g.h = s.height;
    g.w = s.width;
    g.t_center = t_center;
    g.kind = GridKind::histogram;
    g.values.assign(s.pixel_count(), 0.0);
    const double lo_us = (t_center - window / 2.0) * 1e6;
    const double hi_us = (t_center + window / 2.0) * 1e6;
    for (std::size_t i = detail::first_event_at_or_after(s.events, lo_us);
         i < s.events.size() && static_cast<double>(s.events[i].t) < hi_us; ++i) {
        const Event& e = s.events[i];
        g.values[static_cast<std::size_t>(e.y) * s.width + e.x] += 1.0;
    }
    return g;
}

// Exponential decay since each pixel's most recent event at or before
// t_center: exp(-(t_center - t_last) / tau).  Pixels with no event in
// the last 5*tau stay 0 (the tail below exp(-5) is treated as dead).
inline Grid time_map(const EventStream& s, double t_center, double tau) {
    if (tau <= 0.0)
        throw std::invalid_argument("time_map: tau must be positive");
    Grid g;
    g.h = s.height;
    g.w = s.width;
    g.t_center = t_center;
    g.kind = GridKind::timemap;
    g.values.assign(s.pixel_count(), 0.0);
    const double lo_us = (t_center - 5.0 * tau) * 1e6;
    const double hi_us = t_center * 1e6;
    // First index strictly after t_center, then walk backwards; the
    // first visit to a pixel is its most recent event.
    std::size_t idx = detail::first_event_at_or_after(s.events, hi_us);
    while (idx < s.events.size() && static_cast<double>(s.events[idx].t) == hi_us) ++idx;
    std::vector<char> seen(s.pixel_count(), 0);
    for (std::size_t i = idx; i-- > 0;) {
        const Event& e = s.events[i];
        if (static_cast<double>(e.t) < lo_us) break;
        const std::size_t px = static_cast<std::size_t>(e.y) * s.width + e.x;
        if (!seen[px]) {
            seen[px] = 1;
            const double age = t_center - static_cast<double>(e.t) * 1e-6;
            g.values[px] = std::exp(-age / tau);
        }
    }
    return g;
}

// Corner-aligned bilinear resize: output corners sample input corners
// exactly; a size-1 output axis samples the input axis midpoint.
// Values stay within [min, max] of the input.
inline Grid resize_grid(const Grid& g, int out_h, int out_w) {
    if (g.h < 1 || g.w < 1)
        throw std::invalid_argument("resize_grid: empty input grid");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_grid: output size must be positive");
    Grid out;
    out.h = out_h;
    out.w = out_w;
    out.t_center = g.t_center;
    out.kind = g.kind;
    out.values.assign(static_cast<std::size_t>(out_h) * out_w, 0.0);
    const auto src_pos = [](int i, int out_n, int in_n) {
        if (out_n == 1) return static_cast<double>(in_n - 1) / 2.0;
        return static_cast<double>(i) * static_cast<double>(in_n - 1) /
               static_cast<double>(out_n - 1);
    };
    for (int i = 0; i < out_h; ++i) {
        const double sy = src_pos(i, out_h, g.h);
        const int y0 = std::min(static_cast<int>(sy), g.h - 1);
        const int y1 = std::min(y0 + 1, g.h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (int j = 0; j < out_w; ++j) {
            const double sx = src_pos(j, out_w, g.w);
            const int x0 = std::min(static_cast<int>(sx), g.w - 1);
            const int x1 = std::min(x0 + 1, g.w - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = g.at(y0, x0) * (1.0 - fx) + g.at(y0, x1) * fx;
            const double bot = g.at(y1, x0) * (1.0 - fx) + g.at(y1, x1) * fx;
            out.at(i, j) = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

}  // namespace evtad
