#pragma once

// Temporal detection metrics: pooled average recall over top-N
// proposals, average precision at fixed tIoU thresholds with greedy
// score-ordered matching, their mean over thresholds, and a per-ROI
// breakdown.  Matching always treats the roi id as part of the key, so
// results pool across regions without ever matching across them.

#include <algorithm>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evtad/events.hpp"
#include "evtad/intervals.hpp"
#include "evtad/proposals.hpp"

namespace evtad {

struct EvalConfig {
    std::vector<double> tiou_thresholds = {0.1, 0.3, 0.5, 0.7};
    std::vector<int> top_n = {20, 30, 50};
    bool interpolated_ap = false;  // all-point interpolation when true
};

using ProposalGroups = std::map<std::string, std::vector<Proposal>>;
using GtGroups = std::map<std::string, std::vector<Interval>>;

inline GtGroups gt_groups_from_annotations(const AnnotationSet& a) {
    GtGroups g;
    for (const auto& roi : a.rois) g[roi.roi_id];  // list every roi, even if empty
    for (const auto& inst : a.instances) g[inst.roi_id].push_back(inst.interval());
    return g;
}

inline ProposalGroups proposal_groups_from_detections(const std::vector<Detection>& dets) {
    ProposalGroups g;
    for (const auto& d : dets) {
        Proposal p;
        p.interval = d.interval;
        p.score = d.score;
        g[d.roi_id].push_back(std::move(p));
    }
    return g;
}

struct AverageRecallResult {
    std::vector<int> top_n;
    std::vector<double> thresholds;
    // recall[i][j]: pooled recall of top_n[i] proposals at thresholds[j].
    std::vector<std::vector<double>> recall;
    std::vector<double> ar;  // mean of recall[i][*]
};

// Pooled (micro) recall: per group the top-N proposals by score are
// kept, a ground-truth interval counts as recalled at threshold t iff
// some kept proposal reaches tIoU >= t, and the recall ratio is taken
// over all ground truth of all groups at once.
inline AverageRecallResult average_recall(const ProposalGroups& props,
                                          const GtGroups& gts,
                                          const EvalConfig& cfg = {}) {
    if (cfg.top_n.empty() || cfg.tiou_thresholds.empty())
        throw std::invalid_argument("average_recall: empty top-N or threshold list");
    std::size_t total_gt = 0;
    for (const auto& [roi, ivs] : gts) total_gt += ivs.size();
    if (total_gt == 0)
        throw std::invalid_argument("average_recall: no ground-truth instances");

    std::vector<int> ns = cfg.top_n;
    std::sort(ns.begin(), ns.end());

    // recalled_at[i][j] counts gt recalled by top ns[i] at threshold j.
    std::vector<std::vector<std::size_t>> recalled_at(
        ns.size(), std::vector<std::size_t>(cfg.tiou_thresholds.size(), 0));

    for (const auto& [roi, gt_ivs] : gts) {
        if (gt_ivs.empty()) continue;
        std::vector<Proposal> ranked;
        if (auto it = props.find(roi); it != props.end()) ranked = it->second;
        std::stable_sort(ranked.begin(), ranked.end(), proposal_precedes);

        // Walk the ranking once, growing the kept set from one N to the next.
        std::vector<double> best(gt_ivs.size(), 0.0);
        std::size_t rank = 0;
        for (std::size_t i = 0; i < ns.size(); ++i) {
            const auto upto = std::min<std::size_t>(ranked.size(),
                                                    static_cast<std::size_t>(ns[i]));
            for (; rank < upto; ++rank)
                for (std::size_t g = 0; g < gt_ivs.size(); ++g)
                    best[g] = std::max(best[g], tiou(ranked[rank].interval, gt_ivs[g]));
            for (std::size_t j = 0; j < cfg.tiou_thresholds.size(); ++j)
                for (std::size_t g = 0; g < gt_ivs.size(); ++g)
                    if (best[g] >= cfg.tiou_thresholds[j]) ++recalled_at[i][j];
        }
    }

    AverageRecallResult res;
    res.top_n = ns;
    res.thresholds = cfg.tiou_thresholds;
    res.recall.assign(ns.size(), std::vector<double>(cfg.tiou_thresholds.size(), 0.0));
    res.ar.assign(ns.size(), 0.0);
    for (std::size_t i = 0; i < ns.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < cfg.tiou_thresholds.size(); ++j) {
            res.recall[i][j] =
                static_cast<double>(recalled_at[i][j]) / static_cast<double>(total_gt);
            sum += res.recall[i][j];
        }
        res.ar[i] = sum / static_cast<double>(cfg.tiou_thresholds.size());
    }
    return res;
}

// Average precision at one tIoU threshold.  Detections are ranked by
// score (deterministic tie-breaks), each claims the unmatched
// ground-truth interval of its own group with the highest tIoU (ties:
// earlier start) provided that tIoU >= thr.  Non-interpolated by
// default: AP = sum of precision at each TP rank / #gt.
inline double ap_at_tiou(const std::vector<Detection>& dets, const GtGroups& gts,
                         double thr, bool interpolated = false) {
    // Matching accepts tIoU >= thr, so thr = 0 would pair disjoint
    // spans; demand a usable threshold.
    if (!(thr > 0.0 && thr <= 1.0))
        throw std::invalid_argument("ap_at_tiou: threshold must be in (0, 1]");
    std::size_t total_gt = 0;
    for (const auto& [roi, ivs] : gts) total_gt += ivs.size();
    if (total_gt == 0)
        throw std::invalid_argument("ap_at_tiou: no ground-truth instances");

    std::vector<Detection> ranked = dets;
    std::stable_sort(ranked.begin(), ranked.end(), detection_precedes);

    std::map<std::string, std::vector<char>> used;
    for (const auto& [roi, ivs] : gts) used[roi].assign(ivs.size(), 0);

    std::vector<char> is_tp(ranked.size(), 0);
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        const auto git = gts.find(ranked[k].roi_id);
        if (git == gts.end()) continue;  // no gt in this group: FP
        const auto& ivs = git->second;
        auto& flags = used[ranked[k].roi_id];
        std::size_t best_g = ivs.size();
        double best_t = 0.0;
        for (std::size_t g = 0; g < ivs.size(); ++g) {
            if (flags[g]) continue;
            const double t = tiou(ranked[k].interval, ivs[g]);
            if (t < thr) continue;
            if (best_g == ivs.size() || t > best_t ||
                (t == best_t && ivs[g].t_start < ivs[best_g].t_start)) {
                best_g = g;
                best_t = t;
            }
        }
        if (best_g != ivs.size()) {
            flags[best_g] = 1;
            is_tp[k] = 1;
        }
    }

    std::size_t tp = 0;
    if (!interpolated) {
        double ap = 0.0;
        for (std::size_t k = 0; k < ranked.size(); ++k) {
            if (is_tp[k]) {
                ++tp;
                ap += static_cast<double>(tp) / static_cast<double>(k + 1);
            }
        }
        return ap / static_cast<double>(total_gt);
    }
    // All-point interpolation: each TP contributes the best precision
    // achieved at its rank or any later rank.
    std::vector<double> prec(ranked.size(), 0.0);
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (is_tp[k]) ++tp;
        prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    double envelope = 0.0, ap = 0.0;
    for (std::size_t k = ranked.size(); k-- > 0;) {
        envelope = std::max(envelope, prec[k]);
        if (is_tp[k]) ap += envelope;
    }
    return ap / static_cast<double>(total_gt);
}

struct MeanApResult {
    std::vector<double> thresholds;
    std::vector<double> ap;  // one per threshold
    double mean = 0.0;       // unweighted mean over thresholds
};

inline MeanApResult mean_ap(const std::vector<Detection>& dets, const GtGroups& gts,
                            const EvalConfig& cfg = {}) {
    if (cfg.tiou_thresholds.empty())
        throw std::invalid_argument("mean_ap: empty threshold list");
    MeanApResult res;
    res.thresholds = cfg.tiou_thresholds;
    for (double t : cfg.tiou_thresholds)
        res.ap.push_back(ap_at_tiou(dets, gts, t, cfg.interpolated_ap));
    for (double v : res.ap) res.mean += v;
    res.mean /= static_cast<double>(res.ap.size());
    return res;
}

struct PerRoiRow {
    std::string roi_id;
    std::size_t n_gt = 0;
    bool has_gt = false;  // rows without gt carry no APs ("n/a")
    std::vector<double> ap;
    double mean_ap = 0.0;
};

// Per-ROI AP breakdown.  ROIs without ground truth are listed but
// flagged, and they are excluded from any averaging done over rows.
inline std::vector<PerRoiRow> per_roi_report(const std::vector<Detection>& dets,
                                             const GtGroups& gts,
                                             const EvalConfig& cfg = {}) {
    std::map<std::string, std::vector<Detection>> by_roi;
    for (const auto& d : dets) by_roi[d.roi_id].push_back(d);
    std::vector<PerRoiRow> rows;
    for (const auto& [roi, ivs] : gts) {
        PerRoiRow row;
        row.roi_id = roi;
        row.n_gt = ivs.size();
        row.has_gt = !ivs.empty();
        if (row.has_gt) {
            GtGroups solo;
            solo[roi] = ivs;
            const auto dit = by_roi.find(roi);
            const std::vector<Detection> empty;
            const MeanApResult m =
                mean_ap(dit == by_roi.end() ? empty : dit->second, solo, cfg);
            row.ap = m.ap;
            row.mean_ap = m.mean;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_per_roi_csv(std::ostream& out, const std::vector<PerRoiRow>& rows,
                              const EvalConfig& cfg = {}) {
    out << "roi_id,n_gt";
    for (double t : cfg.tiou_thresholds) out << ",ap@" << t;
    out << ",ap_mean\n";
    for (const auto& r : rows) {
        out << r.roi_id << "," << r.n_gt;
        if (r.has_gt) {
            for (double v : r.ap) out << "," << v;
            out << "," << r.mean_ap << "\n";
        } else {
            for (std::size_t i = 0; i <= cfg.tiou_thresholds.size(); ++i) out << ",n/a";
            out << "\n";
        }
    }
}

}  // namespace evtad
