#pragma once

// Interval proposal generation from a normalized rate series.
//
// The main generator floods the series at a grid of thresholds,
// greedily merges neighboring runs whenever their combined duty cycle
// stays high enough, pools the unique intervals from every
// (threshold, merge-ratio) cell, scores them by mean normalized rate,
// and collapses near-duplicates with a high-overlap NMS pass.
// Single-threshold flooding and a geometric sliding window are kept as
// reference baselines.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "evtad/intervals.hpp"
#include "evtad/rate.hpp"

namespace evtad {

enum class ProposalMethod { retag, etag, watershed, sliding };

inline const char* method_name(ProposalMethod m) {
    switch (m) {
        case ProposalMethod::retag: return "retag";
        case ProposalMethod::etag: return "etag";
        case ProposalMethod::watershed: return "watershed";
        case ProposalMethod::sliding: return "sliding";
    }
    return "?";
}

// Which generator produced a proposal and at which grid cell; lambda/mu
// stay negative for the baselines that have no grid.
struct Provenance {
    ProposalMethod method = ProposalMethod::retag;
    double lambda = -1.0;
    double mu = -1.0;

    std::string str() const {
        std::string s = method_name(method);
        if (lambda >= 0.0) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "(l=%.2f,m=%.2f)", lambda, mu);
            s += buf;
        }
        return s;
    }
};

struct Proposal {
    Interval interval;
    double score = 0.0;
    Provenance provenance;
};

inline std::vector<double> default_threshold_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 19; ++k) g.push_back(0.05 * k);
    return g;
}

struct ProposalConfig {
    std::vector<double> lambda_grid = default_threshold_grid();
    std::vector<double> mu_grid = default_threshold_grid();
    double min_duration = 2.0;  // seconds, dropped if strictly shorter
    double nms_tiou = 0.95;
};

// Deterministic proposal ordering: higher score first, then longer,
// then earlier, then provenance (method, lambda, mu).
inline bool proposal_precedes(const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.duration() != b.interval.duration())
        return a.interval.duration() > b.interval.duration();
    if (a.interval.t_start != b.interval.t_start)
        return a.interval.t_start < b.interval.t_start;
    const auto ka = std::make_tuple(static_cast<int>(a.provenance.method),
                                    a.provenance.lambda, a.provenance.mu);
    const auto kb = std::make_tuple(static_cast<int>(b.provenance.method),
                                    b.provenance.lambda, b.provenance.mu);
    return ka < kb;
}

inline std::vector<Proposal> interval_nms(std::vector<Proposal> ps, double thr) {
    return greedy_nms(
        std::move(ps), thr, [](const Proposal& p) { return p.interval; },
        proposal_precedes);
}

namespace detail {

// Maximal runs of bins with value strictly above lambda, half-open
// [first, last) in bin indices.
inline std::vector<std::pair<std::size_t, std::size_t>> runs_above(
    const std::vector<double>& values, double lambda) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t i = 0;
    while (i < values.size()) {
        if (values[i] > lambda) {
            std::size_t j = i + 1;
            while (j < values.size() && values[j] > lambda) ++j;
            runs.emplace_back(i, j);
            i = j;
        } else {
            ++i;
        }
    }
    return runs;
}

// Greedy duty-cycle merge on bin runs: absorb the next run whenever
// (occupied bins incl. next) / (span from group start to next end) >= mu.
// Bin counts make the ratio exact; the result is again sorted and
// non-overlapping.
inline std::vector<std::pair<std::size_t, std::size_t>> merge_runs(
    const std::vector<std::pair<std::size_t, std::size_t>>& runs, double mu) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (runs.empty()) return out;
    std::size_t group_start = runs[0].first;
    std::size_t group_end = runs[0].second;
    std::size_t occupied = runs[0].second - runs[0].first;
    for (std::size_t k = 1; k < runs.size(); ++k) {
        const std::size_t cand_occ = occupied + (runs[k].second - runs[k].first);
        const std::size_t cand_span = runs[k].second - group_start;
        if (static_cast<double>(cand_occ) >= mu * static_cast<double>(cand_span)) {
            occupied = cand_occ;
            group_end = runs[k].second;
        } else {
            out.emplace_back(group_start, group_end);
            group_start = runs[k].first;
            group_end = runs[k].second;
            occupied = runs[k].second - runs[k].first;
        }
    }
    out.emplace_back(group_start, group_end);
    return out;
}

}  // namespace detail

// Maximal runs of the normalized series strictly above lambda, as time
// intervals at bin boundaries.
inline std::vector<Interval> watershed_intervals(const RateSeries& r, double lambda) {
    if (!r.normalized)
        throw std::invalid_argument("watershed_intervals: series must be normalized");
    if (lambda < 0.0 || lambda >= 1.0)
        throw std::invalid_argument("watershed_intervals: lambda must be in [0, 1)");
    std::vector<Interval> out;
    const double t0 = r.t0_sec();
    for (const auto& [b0, b1] : detail::runs_above(r.values, lambda))
        out.push_back(Interval{t0 + static_cast<double>(b0) * r.bin_width,
                               t0 + static_cast<double>(b1) * r.bin_width});
    return out;
}

// Greedy left-to-right merge of sorted, non-overlapping intervals:
// the next interval joins the current group when the summed member
// durations divided by the group span (start of group to end of next)
// reach mu.  Emitted intervals are the group spans.
inline std::vector<Interval> merge_intervals(const std::vector<Interval>& intervals,
                                             double mu) {
    if (mu <= 0.0 || mu > 1.0)
        throw std::invalid_argument("merge_intervals: mu must be in (0, 1]");
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        validate_interval(intervals[i], "merge_intervals");
        if (i > 0 && intervals[i].t_start < intervals[i - 1].t_end)
            throw std::invalid_argument(
                "merge_intervals: input must be sorted and non-overlapping");
    }
    std::vector<Interval> out;
    if (intervals.empty()) return out;
    double group_start = intervals[0].t_start;
    double group_end = intervals[0].t_end;
    double occupied = intervals[0].duration();
    for (std::size_t k = 1; k < intervals.size(); ++k) {
        const double cand_occ = occupied + intervals[k].duration();
        const double cand_span = intervals[k].t_end - group_start;
        if (cand_occ >= mu * cand_span) {
            occupied = cand_occ;
            group_end = intervals[k].t_end;
        } else {
            out.push_back(Interval{group_start, group_end});
            group_start = intervals[k].t_start;
            group_end = intervals[k].t_end;
            occupied = intervals[k].duration();
        }
    }
    out.push_back(Interval{group_start, group_end});
    return out;
}

// Mean normalized rate over the interval; bins partially covered by the
// interval contribute in proportion to their overlap.
inline double score_proposal(const RateSeries& r, const Interval& iv) {
    if (!r.normalized)
        throw std::invalid_argument("score_proposal: series must be normalized");
    validate_interval(iv, "score_proposal");
    const double t0 = r.t0_sec();
    const double t1 = r.t_end_sec();
    constexpr double kEps = 1e-9;
    if (iv.t_start < t0 - kEps || iv.t_end > t1 + kEps)
        throw std::invalid_argument("score_proposal: interval outside the series extent");
    const double bw = r.bin_width;
    const auto n = r.values.size();
    if (n == 0)
        throw std::invalid_argument("score_proposal: empty series");
    std::size_t b0 = static_cast<std::size_t>(std::max(0.0, (iv.t_start - t0) / bw));
    b0 = std::min(b0, n - 1);
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t b = b0; b < n; ++b) {
        const double bin_lo = t0 + static_cast<double>(b) * bw;
        if (bin_lo >= iv.t_end) break;
        const double overlap =
            std::min(iv.t_end, bin_lo + bw) - std::max(iv.t_start, bin_lo);
        if (overlap > 0.0) {
            weighted += r.values[b] * overlap;
            total += overlap;
        }
    }
    return total > 0.0 ? weighted / total : 0.0;
}

namespace detail {

// Shared grid pipeline: flood at each lambda, merge at each mu, keep
// spans no shorter than min_duration, pool unique bin spans (first grid
// cell in iteration order claims the span), score, NMS.
inline std::vector<Proposal> grid_tag(const RateSeries& rn, const ProposalConfig& cfg,
                                      ProposalMethod tag) {
    if (!rn.normalized)
        throw std::invalid_argument("proposal generation: series must be normalized");
    if (cfg.lambda_grid.empty() || cfg.mu_grid.empty())
        throw std::invalid_argument("proposal generation: empty threshold grid");
    if (cfg.min_duration < 0.0)
        throw std::invalid_argument("proposal generation: negative min duration");
    for (double lambda : cfg.lambda_grid)
        if (lambda <= 0.0 || lambda >= 1.0)
            throw std::invalid_argument("proposal generation: lambda outside (0, 1)");
    for (double mu : cfg.mu_grid)
        if (mu <= 0.0 || mu >= 1.0)
            throw std::invalid_argument("proposal generation: mu outside (0, 1)");

    // Prefix sums make each span's mean rate O(1).
    std::vector<double> prefix(rn.values.size() + 1, 0.0);
    for (std::size_t i = 0; i < rn.values.size(); ++i)
        prefix[i + 1] = prefix[i] + rn.values[i];

    const double min_bins_f = cfg.min_duration / rn.bin_width - 1e-9;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<Proposal> pool;
    const double t0 = rn.t0_sec();
    for (double lambda : cfg.lambda_grid) {
        const auto runs = runs_above(rn.values, lambda);
        if (runs.empty()) continue;
        for (double mu : cfg.mu_grid) {
            for (const auto& span : merge_runs(runs, mu)) {
                const std::size_t len = span.second - span.first;
                if (static_cast<double>(len) < min_bins_f) continue;
                if (!seen.insert(span).second) continue;
                Proposal p;
                p.interval =
                    Interval{t0 + static_cast<double>(span.first) * rn.bin_width,
                             t0 + static_cast<double>(span.second) * rn.bin_width};
                p.score = (prefix[span.second] - prefix[span.first]) /
                          static_cast<double>(len);
                p.provenance = Provenance{tag, lambda, mu};
                pool.push_back(std::move(p));
            }
        }
    }
    return interval_nms(std::move(pool), cfg.nms_tiou);
}

}  // namespace detail

// Multi-threshold proposal generator on a robustly normalized series.
inline std::vector<Proposal> retag(const RateSeries& r_normalized,
                                   const ProposalConfig& cfg = {}) {
    return detail::grid_tag(r_normalized, cfg, ProposalMethod::retag);
}

// Same pipeline, but the raw series is normalized with plain min/max
// (percentile 0), so a single outlier bin rescales everything.
inline std::vector<Proposal> event_tag(const RateSeries& r_raw,
                                       const ProposalConfig& cfg = {}) {
    return detail::grid_tag(robust_normalize(r_raw, 0.0), cfg, ProposalMethod::etag);
}

// Single-threshold flooding baseline: one lambda, no merging.  Spans
// shorter than min_duration are dropped, like in the grid pipeline.
inline std::vector<Proposal> watershed_proposals(const RateSeries& r_normalized,
                                                 double lambda,
                                                 double min_duration = 2.0) {
    if (!r_normalized.normalized)
        throw std::invalid_argument("watershed_proposals: series must be normalized");
    std::vector<Proposal> out;
    for (const Interval& iv : watershed_intervals(r_normalized, lambda)) {
        if (iv.duration() < min_duration - 1e-9) continue;
        Proposal p;
        p.interval = iv;
        p.score = score_proposal(r_normalized, iv);
        p.provenance.method = ProposalMethod::watershed;
        p.provenance.lambda = lambda;
        out.push_back(std::move(p));
    }
    return out;
}

struct SlidingWindowConfig {
    int n_widths = 30;
    double w_min = 2.0;   // seconds
    double w_max = 40.0;  // seconds
    double stride = 0.1;  // seconds
};

// Exhaustive fixed-score baseline: geometrically spaced window widths
// slid across [t_begin, t_end].  Every window scores 0.5.
inline std::vector<Proposal> sliding_window(double t_begin, double t_end,
                                            const SlidingWindowConfig& cfg = {}) {
    if (cfg.n_widths < 1)
        throw std::invalid_argument("sliding_window: need at least one width");
    if (cfg.w_min <= 0.0 || cfg.w_max < cfg.w_min)
        throw std::invalid_argument("sliding_window: invalid width range");
    if (cfg.stride <= 0.0)
        throw std::invalid_argument("sliding_window: stride must be positive");
    if (t_end <= t_begin)
        throw std::invalid_argument("sliding_window: empty time span");
    std::vector<Proposal> out;
    constexpr double kEps = 1e-9;
    for (int k = 0; k < cfg.n_widths; ++k) {
        const double width =
            cfg.n_widths == 1
                ? cfg.w_min
                : cfg.w_min * std::pow(cfg.w_max / cfg.w_min,
                                       static_cast<double>(k) /
                                           static_cast<double>(cfg.n_widths - 1));
        for (std::size_t j = 0;; ++j) {
            const double start = t_begin + static_cast<double>(j) * cfg.stride;
            if (start + width > t_end + kEps) break;
            Proposal p;
            p.interval = Interval{start, start + width};
            p.score = 0.5;
            p.provenance.method = ProposalMethod::sliding;
            out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace evtad
