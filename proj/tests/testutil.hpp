#pragma once

// Shared test support: independent brute-force oracles for the metric
// and signal code (deliberately written from the definitions, not by
// calling the library), small random-input generators, and the
// reusable property suites that both the unit tests (small case
// counts) and the acceptance runner (full case counts) execute.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evtad/bottomup.hpp"
#include "evtad/classify.hpp"
#include "evtad/eval.hpp"
#include "evtad/events.hpp"
#include "evtad/intervals.hpp"
#include "evtad/proposals.hpp"
#include "evtad/random.hpp"
#include "evtad/rate.hpp"
#include "evtad/represent.hpp"

namespace testutil {

// ---------------------------------------------------------------- oracles

// Interval overlap from first principles: clip both intervals to their
// common span and measure.
inline double ref_tiou(const evtad::Interval& a, const evtad::Interval& b) {
    const double lo = a.t_start > b.t_start ? a.t_start : b.t_start;
    const double hi = a.t_end < b.t_end ? a.t_end : b.t_end;
    if (hi <= lo) return 0.0;
    const double inter = hi - lo;
    const double total = (a.t_end - a.t_start) + (b.t_end - b.t_start) - inter;
    return inter / total;
}

// Nearest-rank percentile by counting: the smallest value v in the data
// such that at least q% of the points are <= v (the minimum for q = 0).
inline double ref_percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double need = q / 100.0 * static_cast<double>(v.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        ++count;
        if (static_cast<double>(count) >= need) return v[i];
    }
    return v.back();
}

// Per-bin event counts by scanning the whole stream once per bin.
inline std::vector<double> ref_event_rate(const evtad::EventStream& s, double bw) {
    const double duration = s.duration_sec();
    const std::size_t n = static_cast<std::size_t>(duration / bw) + 1;
    std::vector<double> out(n, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        const double lo = static_cast<double>(s.t_begin) * 1e-6 + static_cast<double>(b) * bw;
        const double hi = lo + bw;
        std::size_t count = 0;
        for (const evtad::Event& e : s.events) {
            const double t = static_cast<double>(e.t) * 1e-6;
            // The final bin is closed on the right: it absorbs the
            // stream end itself.
            const bool inside = b + 1 < n ? (t >= lo && t < hi) : (t >= lo);
            if (inside) ++count;
        }
        out[b] = static_cast<double>(count) / bw;
    }
    return out;
}

// Per-pixel in-window counts, double loop.
inline std::vector<double> ref_histogram(const evtad::EventStream& s, double tc,
                                         double window) {
    std::vector<double> out(s.pixel_count(), 0.0);
    for (const evtad::Event& e : s.events) {
        const double t = static_cast<double>(e.t) * 1e-6;
        if (t >= tc - window / 2.0 && t < tc + window / 2.0)
            out[static_cast<std::size_t>(e.y) * s.width + e.x] += 1.0;
    }
    return out;
}

// Per-pixel most-recent-event decay, full scan per pixel.
inline std::vector<double> ref_time_map(const evtad::EventStream& s, double tc,
                                        double tau) {
    std::vector<double> out(s.pixel_count(), 0.0);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            double t_last = -1.0;
            bool found = false;
            for (const evtad::Event& e : s.events) {
                if (e.x != x || e.y != y) continue;
                const double t = static_cast<double>(e.t) * 1e-6;
                if (t <= tc && t >= tc - 5.0 * tau && (!found || t > t_last)) {
                    t_last = t;
                    found = true;
                }
            }
            if (found)
                out[static_cast<std::size_t>(y) * s.width + x] =
                    std::exp(-(tc - t_last) / tau);
        }
    return out;
}

// Run extraction straight from the definition.
inline std::vector<evtad::Interval> ref_watershed(const std::vector<double>& values,
                                                  double bw, double t0, double lambda) {
    std::vector<evtad::Interval> out;
    std::size_t i = 0;
    while (i < values.size()) {
        if (!(values[i] > lambda)) {
            ++i;
            continue;
        }
        const std::size_t first = i;
        while (i < values.size() && values[i] > lambda) ++i;
        out.push_back(evtad::Interval{t0 + static_cast<double>(first) * bw,
                                      t0 + static_cast<double>(i) * bw});
    }
    return out;
}

// Greedy merge straight from the duty-cycle rule.
inline std::vector<evtad::Interval> ref_merge(const std::vector<evtad::Interval>& in,
                                              double mu) {
    std::vector<evtad::Interval> out;
    std::size_t i = 0;
    while (i < in.size()) {
        evtad::Interval group = in[i];
        double occupied = in[i].duration();
        std::size_t j = i + 1;
        while (j < in.size()) {
            const double occ_next = occupied + in[j].duration();
            const double span_next = in[j].t_end - group.t_start;
            if (occ_next >= mu * span_next) {
                occupied = occ_next;
                group.t_end = in[j].t_end;
                ++j;
            } else {
                break;
            }
        }
        out.push_back(group);
        i = j;
    }
    return out;
}

// The deterministic ranking used across the library, re-stated.
inline bool ref_proposal_before(const evtad::Proposal& a, const evtad::Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    const double da = a.interval.t_end - a.interval.t_start;
    const double db = b.interval.t_end - b.interval.t_start;
    if (da != db) return da > db;
    if (a.interval.t_start != b.interval.t_start)
        return a.interval.t_start < b.interval.t_start;
    if (a.provenance.method != b.provenance.method)
        return static_cast<int>(a.provenance.method) < static_cast<int>(b.provenance.method);
    if (a.provenance.lambda != b.provenance.lambda)
        return a.provenance.lambda < b.provenance.lambda;
    return a.provenance.mu < b.provenance.mu;
}

// O(n^2) greedy NMS written independently of the library's template.
inline std::vector<evtad::Proposal> ref_nms(std::vector<evtad::Proposal> ps, double thr) {
    std::stable_sort(ps.begin(), ps.end(), ref_proposal_before);
    std::vector<evtad::Proposal> kept;
    for (const auto& p : ps) {
        bool ok = true;
        for (const auto& k : kept)
            if (ref_tiou(p.interval, k.interval) >= thr) ok = false;
        if (ok) kept.push_back(p);
    }
    return kept;
}

// Pooled recall at one (top-N, threshold) pair from the definitions.
inline double ref_recall(const evtad::ProposalGroups& props, const evtad::GtGroups& gts,
                         int top_n, double thr) {
    std::size_t total = 0, hit = 0;
    for (const auto& [roi, ivs] : gts) {
        total += ivs.size();
        std::vector<evtad::Proposal> ranked;
        if (auto it = props.find(roi); it != props.end()) ranked = it->second;
        std::stable_sort(ranked.begin(), ranked.end(), ref_proposal_before);
        if (ranked.size() > static_cast<std::size_t>(top_n))
            ranked.resize(static_cast<std::size_t>(top_n));
        for (const auto& g : ivs) {
            bool matched = false;
            for (const auto& p : ranked)
                if (ref_tiou(p.interval, g) >= thr) matched = true;
            if (matched) ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

// Greedy AP from the definitions: rank by score (shared deterministic
// tie rules), match within the roi against unmatched ground truth,
// highest tIoU first, earlier start on ties, then accumulate precision
// at each true-positive rank.
inline double ref_ap(std::vector<evtad::Detection> dets, const evtad::GtGroups& gts,
                     double thr) {
    std::size_t n_gt = 0;
    for (const auto& [roi, ivs] : gts) n_gt += ivs.size();
    std::stable_sort(dets.begin(), dets.end(),
                     [](const evtad::Detection& a, const evtad::Detection& b) {
                         if (a.score != b.score) return a.score > b.score;
                         const double da = a.interval.t_end - a.interval.t_start;
                         const double db = b.interval.t_end - b.interval.t_start;
                         if (da != db) return da > db;
                         if (a.interval.t_start != b.interval.t_start)
                             return a.interval.t_start < b.interval.t_start;
                         return a.roi_id < b.roi_id;
                     });
    std::map<std::string, std::vector<bool>> taken;
    for (const auto& [roi, ivs] : gts) taken[roi].assign(ivs.size(), false);
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < dets.size(); ++rank) {
        const auto it = gts.find(dets[rank].roi_id);
        bool is_tp = false;
        if (it != gts.end()) {
            const auto& ivs = it->second;
            auto& flags = taken[dets[rank].roi_id];
            long best = -1;
            double best_t = -1.0;
            for (std::size_t g = 0; g < ivs.size(); ++g) {
                if (flags[g]) continue;
                const double t = ref_tiou(dets[rank].interval, ivs[g]);
                if (t < thr) continue;
                if (t > best_t ||
                    (t == best_t && best >= 0 &&
                     ivs[g].t_start < ivs[static_cast<std::size_t>(best)].t_start)) {
                    best_t = t;
                    best = static_cast<long>(g);
                }
            }
            if (best >= 0) {
                flags[static_cast<std::size_t>(best)] = true;
                is_tp = true;
            }
        }
        if (is_tp) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(n_gt);
}

// ------------------------------------------------------------ generators

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Random sorted stream on a small sensor.
inline evtad::EventStream random_stream(std::mt19937_64& rng, int max_dim = 8,
                                        double max_duration = 2.0, int max_events = 300) {
    evtad::EventStream s;
    s.width = 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(max_dim)));
    s.height = 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(max_dim)));
    s.t_begin = 0;
    s.t_end = static_cast<std::int64_t>(uniform(rng, 0.05, max_duration) * 1e6);
    const int n = static_cast<int>(pick(rng, static_cast<std::size_t>(max_events)));
    std::vector<std::int64_t> times;
    times.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        times.push_back(static_cast<std::int64_t>(
            uniform(rng, 0.0, static_cast<double>(s.t_end))));
    std::sort(times.begin(), times.end());
    for (std::int64_t t : times) {
        evtad::Event e;
        e.t = t;
        e.x = static_cast<std::uint16_t>(pick(rng, static_cast<std::size_t>(s.width)));
        e.y = static_cast<std::uint16_t>(pick(rng, static_cast<std::size_t>(s.height)));
        e.p = static_cast<std::uint8_t>(rng() & 1);
        s.events.push_back(e);
    }
    return s;
}

inline std::vector<evtad::Proposal> random_proposals(std::mt19937_64& rng, int count,
                                                     double span = 30.0) {
    std::vector<evtad::Proposal> out;
    for (int i = 0; i < count; ++i) {
        const double a = uniform(rng, 0.0, span - 0.5);
        const double len = uniform(rng, 0.1, span - a);
        evtad::Proposal p;
        p.interval = evtad::Interval{a, a + len};
        p.score = uniform(rng, 0.0, 1.0);
        p.provenance.lambda = 0.05 * static_cast<double>(1 + pick(rng, 19));
        p.provenance.mu = 0.05 * static_cast<double>(1 + pick(rng, 19));
        out.push_back(p);
    }
    return out;
}

// Sorted, pairwise disjoint intervals for merge tests.
inline std::vector<evtad::Interval> random_disjoint_intervals(std::mt19937_64& rng,
                                                              int max_count = 12) {
    std::vector<evtad::Interval> out;
    const int n = 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(max_count)));
    double t = uniform(rng, 0.0, 2.0);
    for (int i = 0; i < n; ++i) {
        const double len = uniform(rng, 0.05, 3.0);
        out.push_back(evtad::Interval{t, t + len});
        t += len + uniform(rng, 0.05, 4.0);
    }
    return out;
}

// --------------------------------------------------------- property suites
//
// Each suite runs `cases` randomized checks and reports the first
// failure; both the unit tests and the acceptance gate call these.

struct PropertyResult {
    bool ok = true;
    std::string what;
};

#define TU_CHECK(cond, msg)                                      \
    do {                                                         \
        if (!(cond)) {                                           \
            return PropertyResult{false, std::string(msg) +     \
                                             " (case " +        \
                                             std::to_string(c) + \
                                             ")"};               \
        }                                                        \
    } while (0)

// NMS: idempotence, pairwise-tIoU bound, input-order invariance.
inline PropertyResult prop_nms(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        auto ps = random_proposals(rng, 2 + static_cast<int>(pick(rng, 30)));
        const double thr = uniform(rng, 0.05, 1.0);
        const auto once = evtad::interval_nms(ps, thr);
        const auto twice = evtad::interval_nms(once, thr);
        TU_CHECK(once.size() == twice.size(), "nms not idempotent (size)");
        for (std::size_t i = 0; i < once.size(); ++i) {
            TU_CHECK(once[i].interval.t_start == twice[i].interval.t_start &&
                         once[i].interval.t_end == twice[i].interval.t_end &&
                         once[i].score == twice[i].score,
                     "nms not idempotent (content)");
            for (std::size_t j = i + 1; j < once.size(); ++j)
                TU_CHECK(evtad::tiou(once[i].interval, once[j].interval) < thr,
                         "kept pair violates tIoU bound");
        }
        auto shuffled = ps;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[pick(rng, i)]);
        const auto again = evtad::interval_nms(shuffled, thr);
        TU_CHECK(again.size() == once.size(), "nms depends on input order (size)");
        for (std::size_t i = 0; i < once.size(); ++i)
            TU_CHECK(again[i].interval.t_start == once[i].interval.t_start &&
                         again[i].interval.t_end == once[i].interval.t_end,
                     "nms depends on input order (content)");
        const auto ref = ref_nms(ps, thr);
        TU_CHECK(ref.size() == once.size(), "nms disagrees with oracle");
    }
    return {};
}

// Histogram conservation: cell sum equals the in-window event count.
inline PropertyResult prop_histogram_conservation(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto s = random_stream(rng);
        const double tc = uniform(rng, -0.2, s.duration_sec() + 0.2);
        const double w = uniform(rng, 0.01, 1.5);
        const auto g = evtad::event_histogram(s, tc, w);
        double cell_sum = 0.0;
        for (double v : g.values) cell_sum += v;
        std::size_t in_window = 0;
        for (const auto& e : s.events) {
            const double t = static_cast<double>(e.t) * 1e-6;
            if (t >= tc - w / 2.0 && t < tc + w / 2.0) ++in_window;
        }
        TU_CHECK(cell_sum == static_cast<double>(in_window),
                 "histogram sum != in-window count");
        const auto ref = ref_histogram(s, tc, w);
        for (std::size_t i = 0; i < ref.size(); ++i)
            TU_CHECK(g.values[i] == ref[i], "histogram cell disagrees with oracle");
    }
    return {};
}

// Time map: values in [0,1]; 1.0 only at a zero-age event; moving the
// center later (with no new events) never increases a cell.
inline PropertyResult prop_timemap(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto s = random_stream(rng);
        const double tau = uniform(rng, 0.02, 0.5);
        const double tc = uniform(rng, 0.0, s.duration_sec());
        const auto g = evtad::time_map(s, tc, tau);
        for (std::size_t i = 0; i < g.values.size(); ++i)
            TU_CHECK(g.values[i] >= 0.0 && g.values[i] <= 1.0, "timemap out of [0,1]");
        const auto ref = ref_time_map(s, tc, tau);
        for (std::size_t i = 0; i < ref.size(); ++i)
            TU_CHECK(std::abs(g.values[i] - ref[i]) <= 1e-12,
                     "timemap disagrees with oracle");
        // Decay check: take two centers past the final event, so no new
        // event can enter the window between them.  Every pixel's value
        // must then shrink (or drop to zero once it leaves the window).
        const double tca = s.duration_sec() + uniform(rng, 0.001, 0.2);
        const double tcb = tca + uniform(rng, 0.001, 0.2);
        const auto ga = evtad::time_map(s, tca, tau);
        const auto gb = evtad::time_map(s, tcb, tau);
        for (std::size_t i = 0; i < ga.values.size(); ++i)
            if (ga.values[i] > 0.0)
                TU_CHECK(gb.values[i] <= ga.values[i],
                         "timemap increased as the center moved later");
    }
    return {};
}

// Robust normalization: range, monotone inside the clip band, spike
// robustness (the spike never becomes a clip bound; the best original
// bin keeps the best normalized value).
inline PropertyResult prop_normalization(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        evtad::RateSeries r;
        r.bin_width = 0.033;
        const int n = 101 + static_cast<int>(pick(rng, 200));
        for (int i = 0; i < n; ++i) r.values.push_back(uniform(rng, 0.0, 500.0));
        // p >= 1 with n >= 101 keeps both clip bounds strictly inside
        // the original order statistics even after one appended spike.
        const double p = uniform(rng, 1.0, 10.0);
        const auto norm = evtad::robust_normalize(r, p);
        double mx = -1.0;
        std::size_t argmax_raw = 0, argmax_norm = 0;
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            TU_CHECK(norm.values[i] >= 0.0 && norm.values[i] <= 1.0,
                     "normalized value outside [0,1]");
            if (r.values[i] > mx) {
                mx = r.values[i];
                argmax_raw = i;
            }
        }
        mx = -1.0;
        for (std::size_t i = 0; i < norm.values.size(); ++i)
            if (norm.values[i] > mx) {
                mx = norm.values[i];
                argmax_norm = i;
            }
        TU_CHECK(norm.values[argmax_raw] == norm.values[argmax_norm],
                 "raw argmax lost the top normalized value");

        // Append one spike far above everything; p-th percentiles of the
        // grown series must still be original values, and the original
        // argmax must keep the top normalized value among original bins.
        evtad::RateSeries spiked = r;
        spiked.values.push_back(1e6);
        const auto norm2 = evtad::robust_normalize(spiked, p);
        std::vector<double> sorted = spiked.values;
        std::sort(sorted.begin(), sorted.end());
        const double lo2 = evtad::percentile_nearest_rank(sorted, p);
        const double hi2 = evtad::percentile_nearest_rank(sorted, 100.0 - p);
        TU_CHECK(lo2 < 1e6 && hi2 < 1e6, "spike became a clip bound");
        double best = -1.0;
        std::size_t arg2 = 0;
        for (std::size_t i = 0; i < r.values.size(); ++i)
            if (norm2.values[i] > best) {
                best = norm2.values[i];
                arg2 = i;
            }
        TU_CHECK(norm2.values[arg2] == norm2.values[argmax_raw],
                 "spike changed the original argmax");
    }
    return {};
}

// Merging: the output covers the input, never has more intervals, stays
// sorted/disjoint, and agrees with the oracle.
inline PropertyResult prop_merge_extensivity(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto in = random_disjoint_intervals(rng);
        const double mu = uniform(rng, 0.05, 1.0);
        const auto out = evtad::merge_intervals(in, mu);
        TU_CHECK(out.size() <= in.size(), "merge increased interval count");
        for (const auto& orig : in) {
            bool covered = false;
            for (const auto& m : out)
                if (m.t_start <= orig.t_start && orig.t_end <= m.t_end) covered = true;
            TU_CHECK(covered, "merge lost coverage of an input interval");
        }
        for (std::size_t i = 1; i < out.size(); ++i)
            TU_CHECK(out[i].t_start >= out[i - 1].t_end, "merged output overlaps");
        const auto ref = ref_merge(in, mu);
        TU_CHECK(ref.size() == out.size(), "merge disagrees with oracle (count)");
        for (std::size_t i = 0; i < out.size(); ++i)
            TU_CHECK(out[i].t_start == ref[i].t_start && out[i].t_end == ref[i].t_end,
                     "merge disagrees with oracle (span)");
    }
    return {};
}

// Morphological closing: idempotent, extensive, and a no-op on solid
// all-one and all-zero inputs.
inline PropertyResult prop_closing(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    for (int c = 0; c < cases; ++c) {
        evtad::BinarySeries b;
        b.stride = 0.033;
        const int n = 1 + static_cast<int>(pick(rng, 200));
        const double density = uniform(rng, 0.0, 1.0);
        for (int i = 0; i < n; ++i)
            b.values.push_back(uniform(rng, 0.0, 1.0) < density ? 1 : 0);
        const int kernel = 1 + 2 * static_cast<int>(pick(rng, 12));
        const auto once = evtad::morphological_close(b, kernel);
        const auto twice = evtad::morphological_close(once, kernel);
        TU_CHECK(once.values == twice.values, "closing not idempotent");
        for (std::size_t i = 0; i < b.values.size(); ++i)
            TU_CHECK(once.values[i] >= b.values[i], "closing dropped a positive");
    }
    return {};
}

#undef TU_CHECK

}  // namespace testutil
