#pragma once

// Bottom-up detection baseline: classify a dense series of snapshots
// independently, clean the resulting binary sequence with a 1D
// morphological closing, and read maximal positive runs back out as
// detections.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evtad/classify.hpp"
#include "evtad/events.hpp"
#include "evtad/intervals.hpp"
#include "evtad/represent.hpp"

namespace evtad {

// Per-snapshot binary decisions at a fixed stride.
struct BinarySeries {
    std::vector<std::uint8_t> values;
    double stride = 0.0;     // seconds between snapshot centers
    std::int64_t t0_us = 0;  // center of the first snapshot

    double t0_sec() const { return static_cast<double>(t0_us) * 1e-6; }
};

inline std::size_t snapshot_count(const EventStream& s, double stride) {
    if (stride <= 0.0)
        throw std::invalid_argument("snapshot series: stride must be positive");
    return static_cast<std::size_t>(s.duration_sec() / stride) + 1;
}

// Snapshot centers t_begin + k * stride for k = 0 .. floor(duration/stride);
// both endpoints of the stream get a snapshot.
inline std::vector<Grid> snapshot_series(const EventStream& s, double window,
                                         double stride) {
    const std::size_t n = snapshot_count(s, stride);
    std::vector<Grid> out;
    out.reserve(n);
    const double t0 = static_cast<double>(s.t_begin) * 1e-6;
    for (std::size_t k = 0; k < n; ++k)
        out.push_back(event_histogram(s, t0 + static_cast<double>(k) * stride, window));
    return out;
}

// Classify snapshots one at a time (the dense series is never
// materialized) into a binary series: model probability > 0.5.
inline BinarySeries classify_snapshots(const EventStream& s, const Model& m,
                                       double window, double stride,
                                       const RepresentConfig& rep,
                                       const EncoderConfig& enc) {
    const std::size_t n = snapshot_count(s, stride);
    BinarySeries b;
    b.stride = stride;
    b.t0_us = s.t_begin;
    b.values.resize(n);
    const double t0 = static_cast<double>(s.t_begin) * 1e-6;
    for (std::size_t k = 0; k < n; ++k) {
        const double tc = t0 + static_cast<double>(k) * stride;
        Grid g = rep.kind == GridKind::histogram ? event_histogram(s, tc, window)
                                                 : time_map(s, tc, rep.tau);
        const FeatureVector f = encode_snapshot(resize_grid(g, rep.out_h, rep.out_w), enc);
        b.values[k] = m.predict(f) > 0.5 ? 1 : 0;
    }
    return b;
}

// 1D closing (dilation, then erosion) with an odd kernel, on the
// zero-extended signal.  Extending the signal (rather than clamping the
// erosion window) keeps the usual guarantees: the result contains the
// input, closing twice equals closing once, and solid runs are fixed
// points.
inline BinarySeries morphological_close(const BinarySeries& b, int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("morphological_close: kernel must be odd and positive");
    const int r = kernel / 2;
    const std::size_t n = b.values.size();
    BinarySeries out;
    out.stride = b.stride;
    out.t0_us = b.t0_us;
    out.values.assign(n, 0);
    if (n == 0 || r == 0) {
        out.values = b.values;
        return out;
    }
    // Dilation on the extended index range [-r, n-1+r]; outside that the
    // dilated signal is certainly 0 and cannot help any erosion window.
    std::vector<std::uint8_t> dil(n + 2 * static_cast<std::size_t>(r), 0);
    for (std::size_t i = 0; i < dil.size(); ++i) {
        const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(i) - r;
        for (std::ptrdiff_t j = center - r; j <= center + r; ++j) {
            if (j >= 0 && j < static_cast<std::ptrdiff_t>(n) && b.values[j]) {
                dil[i] = 1;
                break;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t v = 1;
        for (int j = -r; j <= r; ++j)
            // dil index is shifted by +r relative to signal indices.
            if (!dil[i + static_cast<std::size_t>(j + r)]) {
                v = 0;
                break;
            }
        out.values[i] = v;
    }
    return out;
}

// Maximal runs of positive snapshots become detections covering
// [t0 + first * stride, t0 + (last + 1) * stride), score 1.0.
inline std::vector<Detection> extract_regions(const BinarySeries& b,
                                              const std::string& roi_id,
                                              const std::string& label = "ED") {
    std::vector<Detection> out;
    const double t0 = b.t0_sec();
    std::size_t i = 0;
    while (i < b.values.size()) {
        if (b.values[i]) {
            std::size_t j = i + 1;
            while (j < b.values.size() && b.values[j]) ++j;
            out.push_back(Detection{roi_id,
                                    Interval{t0 + static_cast<double>(i) * b.stride,
                                             t0 + static_cast<double>(j) * b.stride},
                                    1.0, label});
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

// Labeled per-snapshot features for training the snapshot classifier:
// a snapshot is positive iff its center lies inside a ground-truth
// interval (half-open, [start, end)).
inline void snapshot_training_set(const EventStream& s,
                                  const std::vector<Interval>& gt, double window,
                                  double stride, const RepresentConfig& rep,
                                  const EncoderConfig& enc,
                                  std::vector<FeatureVector>& features,
                                  std::vector<int>& labels) {
    const std::size_t n = snapshot_count(s, stride);
    const double t0 = static_cast<double>(s.t_begin) * 1e-6;
    for (std::size_t k = 0; k < n; ++k) {
        const double tc = t0 + static_cast<double>(k) * stride;
        Grid g = rep.kind == GridKind::histogram ? event_histogram(s, tc, window)
                                                 : time_map(s, tc, rep.tau);
        features.push_back(encode_snapshot(resize_grid(g, rep.out_h, rep.out_w), enc));
        int label = 0;
        for (const Interval& iv : gt)
            if (tc >= iv.t_start && tc < iv.t_end) {
                label = 1;
                break;
            }
        labels.push_back(label);
    }
}

struct BottomUpConfig {
    double window = 5.0;   // snapshot window, seconds
    double stride = 0.033;  // snapshot stride, seconds
    int morph_kernel = 15;  // 0 disables the closing
    RepresentConfig represent;
    EncoderConfig encoder;
    std::string label = "ED";
};

inline std::vector<Detection> bottomup_detect(const EventStream& roi_stream,
                                              const std::string& roi_id,
                                              const Model& m,
                                              const BottomUpConfig& cfg) {
    BinarySeries b = classify_snapshots(roi_stream, m, cfg.window, cfg.stride,
                                        cfg.represent, cfg.encoder);
    if (cfg.morph_kernel > 0) b = morphological_close(b, cfg.morph_kernel);
    return extract_regions(b, roi_id, cfg.label);
}

}  // namespace evtad
