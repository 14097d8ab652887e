#pragma once

// Event-camera data model: per-pixel brightness-change events with
// microsecond timestamps, plus the stream-level cleanup filters
// (hot pixels, full-frame flash bursts) and ROI cropping.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evtad/intervals.hpp"

namespace evtad {

struct Event {
    std::int64_t t = 0;  // microseconds
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint8_t p = 0;  // polarity, 0 or 1
};

// Events sorted by timestamp plus the sensor geometry and the recording
// extent.  The extent is a property of the recording: filters that drop
// events keep it unchanged.
struct EventStream {
    std::vector<Event> events;
    int width = 0;
    int height = 0;
    std::int64_t t_begin = 0;  // microseconds
    std::int64_t t_end = 0;    // microseconds, >= t_begin

    double duration_sec() const {
        return static_cast<double>(t_end - t_begin) * 1e-6;
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
};

struct BoundingBox {
    std::string roi_id;
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

// One annotated behavior occurrence inside a ROI.
struct AnnotationInstance {
    std::string roi_id;
    std::int64_t t_start_us = 0;
    std::int64_t t_end_us = 0;  // > t_start_us
    std::string label;

    Interval interval() const {
        return Interval{static_cast<double>(t_start_us) * 1e-6,
                        static_cast<double>(t_end_us) * 1e-6};
    }
};

struct AnnotationSet {
    std::vector<BoundingBox> rois;
    std::vector<AnnotationInstance> instances;
};

inline void validate_stream(const EventStream& s) {
    if (s.width <= 0 || s.height <= 0)
        throw std::invalid_argument("event stream: sensor dimensions must be positive");
    if (s.t_end < s.t_begin)
        throw std::invalid_argument("event stream: t_end precedes t_begin");
    std::int64_t prev = s.t_begin;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        const Event& e = s.events[i];
        if (e.t < prev)
            throw std::invalid_argument("event stream: events not sorted at index " +
                                        std::to_string(i));
        if (e.t > s.t_end)
            throw std::invalid_argument("event stream: event beyond t_end at index " +
                                        std::to_string(i));
        if (e.x >= s.width || e.y >= s.height)
            throw std::invalid_argument(
                "event stream: coordinate outside sensor at index " + std::to_string(i));
        if (e.p > 1)
            throw std::invalid_argument("event stream: polarity must be 0 or 1 at index " +
                                        std::to_string(i));
        prev = e.t;
    }
}

inline void validate_annotations(const AnnotationSet& a) {
    for (const auto& r : a.rois) {
        if (r.roi_id.empty())
            throw std::invalid_argument("annotations: empty roi id");
        if (r.w <= 0 || r.h <= 0)
            throw std::invalid_argument("annotations: roi '" + r.roi_id +
                                        "' must have positive extent");
        std::size_t n = 0;
        for (const auto& q : a.rois)
            if (q.roi_id == r.roi_id) ++n;
        if (n != 1)
            throw std::invalid_argument("annotations: duplicate roi id '" + r.roi_id + "'");
    }
    for (const auto& inst : a.instances) {
        bool known = false;
        for (const auto& r : a.rois) known |= (r.roi_id == inst.roi_id);
        if (!known)
            throw std::invalid_argument("annotations: instance references unknown roi '" +
                                        inst.roi_id + "'");
        if (inst.t_end_us <= inst.t_start_us)
            throw std::invalid_argument("annotations: instance in roi '" + inst.roi_id +
                                        "' has non-positive duration");
    }
    // Per roi, instances must not overlap (touching is fine).
    for (const auto& r : a.rois) {
        std::vector<const AnnotationInstance*> in_roi;
        for (const auto& inst : a.instances)
            if (inst.roi_id == r.roi_id) in_roi.push_back(&inst);
        std::sort(in_roi.begin(), in_roi.end(),
                  [](const AnnotationInstance* p, const AnnotationInstance* q) {
                      return p->t_start_us < q->t_start_us;
                  });
        for (std::size_t i = 1; i < in_roi.size(); ++i)
            if (in_roi[i]->t_start_us < in_roi[i - 1]->t_end_us)
                throw std::invalid_argument("annotations: overlapping instances in roi '" +
                                            r.roi_id + "'");
    }
}

// --- time binning shared by the rate series and the flash filter ---

// Number of fixed-width bins needed so that [t_begin, t_end] is covered,
// bins anchored at t_begin.  A zero-duration stream still gets one bin.
inline std::size_t covering_bin_count(std::int64_t t_begin_us, std::int64_t t_end_us,
                                      double bin_width_sec) {
    if (bin_width_sec <= 0.0)
        throw std::invalid_argument("bin width must be positive");
    const double duration = static_cast<double>(t_end_us - t_begin_us) * 1e-6;
    return static_cast<std::size_t>(std::max(0.0, duration / bin_width_sec)) + 1;
}

inline std::size_t bin_index(std::int64_t t_us, std::int64_t t_begin_us,
                             double bin_width_sec) {
    const double off = static_cast<double>(t_us - t_begin_us) * 1e-6;
    return static_cast<std::size_t>(off / bin_width_sec);
}

// Removes every event of pixels whose whole-stream event rate exceeds
// rate_threshold (events per second, strictly greater).  The recording
// extent is preserved, so applying the filter twice equals applying it
// once.  Zero-duration streams have no defined per-pixel rate.
inline EventStream hot_pixel_filter(const EventStream& s, double rate_threshold) {
    if (rate_threshold < 0.0)
        throw std::invalid_argument("hot_pixel_filter: threshold must be non-negative");
    if (s.t_end <= s.t_begin)
        throw std::invalid_argument("hot_pixel_filter: zero-duration stream");
    const double duration = s.duration_sec();
    std::vector<std::uint32_t> counts(s.pixel_count(), 0);
    for (const Event& e : s.events)
        ++counts[static_cast<std::size_t>(e.y) * s.width + e.x];
    EventStream out;
    out.width = s.width;
    out.height = s.height;
    out.t_begin = s.t_begin;
    out.t_end = s.t_end;
    out.events.reserve(s.events.size());
    for (const Event& e : s.events) {
        const double rate =
            counts[static_cast<std::size_t>(e.y) * s.width + e.x] / duration;
        if (rate <= rate_threshold) out.events.push_back(e);
    }
    return out;
}

// Removes full-frame flash bursts: time bins whose event count exceeds
// burst_factor times the median count of non-empty bins AND whose
// active-pixel coverage exceeds coverage_fraction of the sensor.
//
// The rule is iterated to a fixpoint (each pass empties the flagged
// bins and re-derives the median), which makes the filter idempotent
// even when removing one burst lowers the median enough to expose
// another.  Localized bursts (single hot pixel) fail the coverage test
// and are retained.
inline EventStream ir_flash_filter(const EventStream& s, double bin_width_sec,
                                   double burst_factor, double coverage_fraction) {
    if (burst_factor <= 1.0)
        throw std::invalid_argument("ir_flash_filter: burst factor must exceed 1");
    if (coverage_fraction <= 0.0 || coverage_fraction >= 1.0)
        throw std::invalid_argument("ir_flash_filter: coverage fraction must be in (0, 1)");
    const std::size_t n_bins = covering_bin_count(s.t_begin, s.t_end, bin_width_sec);

    std::vector<Event> events = s.events;
    const std::size_t n_pixels = s.pixel_count();
    std::vector<std::uint32_t> stamp(n_pixels, 0);  // last bin that touched a pixel
    std::uint32_t pass_tag = 0;

    for (;;) {
        std::vector<std::uint64_t> count(n_bins, 0);
        std::vector<std::uint64_t> active(n_bins, 0);
        // Events are sorted, so each bin's pixels are visited contiguously;
        // stamp[] de-duplicates pixels within a bin across passes.
        std::size_t i = 0;
        while (i < events.size()) {
            const std::size_t b = bin_index(events[i].t, s.t_begin, bin_width_sec);
            ++pass_tag;
            std::size_t j = i;
            while (j < events.size() &&
                   bin_index(events[j].t, s.t_begin, bin_width_sec) == b) {
                const std::size_t px =
                    static_cast<std::size_t>(events[j].y) * s.width + events[j].x;
                ++count[b];
                if (stamp[px] != pass_tag) {
                    stamp[px] = pass_tag;
                    ++active[b];
                }
                ++j;
            }
            i = j;
        }

        std::vector<std::uint64_t> nonzero;
        for (std::uint64_t c : count)
            if (c > 0) nonzero.push_back(c);
        if (nonzero.empty()) break;
        std::sort(nonzero.begin(), nonzero.end());
        const double median =
            static_cast<double>(nonzero[(nonzero.size() - 1) / 2]);

        std::vector<char> drop(n_bins, 0);
        bool any = false;
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double coverage =
                static_cast<double>(active[b]) / static_cast<double>(n_pixels);
            if (static_cast<double>(count[b]) > burst_factor * median &&
                coverage > coverage_fraction) {
                drop[b] = 1;
                any = true;
            }
        }
        if (!any) break;
        std::vector<Event> kept;
        kept.reserve(events.size());
        for (const Event& e : events)
            if (!drop[bin_index(e.t, s.t_begin, bin_width_sec)]) kept.push_back(e);
        events.swap(kept);
    }

    EventStream out;
    out.width = s.width;
    out.height = s.height;
    out.t_begin = s.t_begin;
    out.t_end = s.t_end;
    out.events = std::move(events);
    return out;
}

// Restricts a stream to a bounding box and rebases coordinates so the
// box corner becomes (0, 0).  Timestamps and extent are untouched.
inline EventStream crop_to_roi(const EventStream& s, const BoundingBox& box) {
    if (box.w <= 0 || box.h <= 0 || box.x < 0 || box.y < 0 ||
        box.x + box.w > s.width || box.y + box.h > s.height)
        throw std::invalid_argument("crop_to_roi: box '" + box.roi_id +
                                    "' does not fit the sensor");
    EventStream out;
    out.width = box.w;
    out.height = box.h;
    out.t_begin = s.t_begin;
    out.t_end = s.t_end;
    for (const Event& e : s.events) {
        if (e.x >= box.x && e.x < box.x + box.w && e.y >= box.y && e.y < box.y + box.h) {
            Event c = e;
            c.x = static_cast<std::uint16_t>(e.x - box.x);
            c.y = static_cast<std::uint16_t>(e.y - box.y);
            out.events.push_back(c);
        }
    }
    return out;
}

}  // namespace evtad
