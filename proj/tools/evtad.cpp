// evtad — command-line front end for the event-stream temporal action
// detection toolkit.
//
// Subcommands:
//   synth     generate a synthetic event scene (events.csv + annotations.json)
//   rate      per-bin event rate of a stream (optionally robustly normalized)
//   propose   temporal proposals per ROI (retag | etag | watershed | sliding)
//   snapshot  dump one grid representation (histogram | timemap) as CSV
//   train     fit the detection head (proposal-level or per-snapshot)
//   detect    end-to-end detections per ROI (atsn | bottomup | perfect)
//   eval      AR / mAP report for detections against annotations
//   report    per-ROI rate curves + per-ROI AP table for plotting
//
// Conventions: one machine-readable JSON summary line on stdout, progress
// and diagnostics on stderr.  Exit codes: 0 success, 2 usage error,
// 3 missing input file, 4 malformed input (schema), 5 internal error.
// Every randomized step is driven by --seed; identical flags + seed give
// byte-identical artifacts.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evtad/bottomup.hpp"
#include "evtad/classify.hpp"
#include "evtad/eval.hpp"
#include "evtad/events.hpp"
#include "evtad/io.hpp"
#include "evtad/proposals.hpp"
#include "evtad/rate.hpp"
#include "evtad/represent.hpp"
#include "evtad/synth.hpp"

namespace {

using nlohmann::ordered_json;

// Distinct from the loaders' runtime_error so missing inputs get their
// own exit code with the offending path in the message.
struct MissingInput {
    std::string path;
};

void require_input(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingInput{path};
}

void print_summary(const ordered_json& j) { std::cout << j.dump() << "\n"; }

// Shortest-form double for JSON keys / CSV cells ("0.1", not "0.100000").
std::string num_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// Index-sharded worker pool; fn(i) runs exactly once per index.  The
// first exception wins and is rethrown after all threads join, so a
// failure in one ROI cannot leave detached workers behind.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const int k = std::max(1, std::min(jobs, static_cast<int>(n)));
    if (k <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

evtad::EventStream load_events(const std::string& path, int width, int height) {
    require_input(path);
    evtad::EventCsvOptions opt;
    opt.width = width;
    opt.height = height;
    return evtad::load_event_csv(path, opt);
}

evtad::AnnotationSet load_gt(const std::string& path) {
    require_input(path);
    return evtad::load_annotations(path);
}

// ROI boxes in declaration order, optionally narrowed to one id.
std::vector<evtad::BoundingBox> select_rois(const evtad::AnnotationSet& ann,
                                            const std::string& only) {
    if (only.empty()) return ann.rois;
    for (const auto& r : ann.rois)
        if (r.roi_id == only) return {r};
    throw std::invalid_argument("unknown ROI id '" + only + "'");
}

std::int64_t bin_start_us(const evtad::RateSeries& r, std::size_t k) {
    return r.t0_us + evtad::to_us(static_cast<double>(k) * r.bin_width);
}

void write_rate_csv(const std::string& path, const evtad::RateSeries& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write rate file: " + path);
    out << "bin_start_us,rate\n";
    for (std::size_t k = 0; k < r.values.size(); ++k)
        out << bin_start_us(r, k) << "," << r.values[k] << "\n";
}

// Stable per-ROI seed derivation so reordering flags cannot change which
// thinned negatives a ROI keeps.
std::uint64_t roi_seed(std::uint64_t seed, std::size_t roi_index) {
    return seed ^ (0x9E3779B97F4A7C15ull * (roi_index + 1));
}

struct RateFlags {
    double bin_width = 0.033;
    double percentile = 1.0;
};

void add_rate_flags(CLI::App* sc, RateFlags& f) {
    sc->add_option("--bin-width", f.bin_width, "Rate bin width, seconds")
        ->capture_default_str();
    sc->add_option("--percentile", f.percentile,
                   "Robust clip percentile p (clips at p-th / (100-p)-th); 0 = min/max")
        ->capture_default_str();
}

struct EvalFlags {
    std::vector<double> tiou = {0.1, 0.3, 0.5, 0.7};
    std::vector<int> top_n = {20, 30, 50};
    bool interpolated = false;

    evtad::EvalConfig config() const {
        evtad::EvalConfig c;
        c.tiou_thresholds = tiou;
        c.top_n = top_n;
        c.interpolated_ap = interpolated;
        return c;
    }
};

void add_eval_flags(CLI::App* sc, EvalFlags& f) {
    sc->add_option("--tiou", f.tiou, "tIoU thresholds")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--top-n", f.top_n, "Proposal budgets for average recall")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_flag("--interpolated", f.interpolated,
                 "All-point interpolated AP instead of raw precision sums");
}

// Grid feature flags shared by train and the snapshot dump.
struct RepresentFlags {
    std::string kind = "histogram";
    double window = 1.0;
    double tau = 0.2;
    int out_h = 32;
    int out_w = 32;
    int patches = 2;

    evtad::RepresentConfig represent() const {
        evtad::RepresentConfig r;
        r.kind = kind == "timemap" ? evtad::GridKind::timemap
                                   : evtad::GridKind::histogram;
        r.window = window;
        r.tau = tau;
        r.out_h = out_h;
        r.out_w = out_w;
        return r;
    }
};

void add_represent_flags(CLI::App* sc, RepresentFlags& f) {
    sc->add_option("--kind", f.kind, "Grid representation")
        ->check(CLI::IsMember({"histogram", "timemap"}))
        ->capture_default_str();
    sc->add_option("--window", f.window, "Histogram window width, seconds")
        ->capture_default_str();
    sc->add_option("--tau", f.tau, "Time-map decay constant, seconds")
        ->capture_default_str();
    sc->add_option("--out-h", f.out_h, "Grid height after resize")
        ->capture_default_str();
    sc->add_option("--out-w", f.out_w, "Grid width after resize")
        ->capture_default_str();
    sc->add_option("--patches", f.patches, "Pooled-patch partition size P")
        ->capture_default_str();
}

// ---------------------------------------------------------------- synth

int run_synth(const std::string& config_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed, int hot_pixels,
              double hot_rate) {
    require_input(config_path);
    evtad::SceneConfig cfg = evtad::load_scene_config(config_path);
    if (seed_given) cfg.seed = seed;

    std::cerr << "synth: " << cfg.width << "x" << cfg.height << ", "
              << cfg.duration << " s, " << cfg.rois.size() << " ROIs, seed "
              << cfg.seed << "\n";
    evtad::Scene scene = evtad::generate_scene(cfg);
    if (hot_pixels > 0) {
        scene.stream = evtad::add_hot_pixels(
            scene.stream, static_cast<std::size_t>(hot_pixels), hot_rate, cfg.seed);
        std::cerr << "synth: added " << hot_pixels << " hot pixels at "
                  << hot_rate << " ev/s\n";
    }

    std::filesystem::create_directories(out_dir);
    const std::string events_path =
        (std::filesystem::path(out_dir) / "events.csv").string();
    const std::string ann_path =
        (std::filesystem::path(out_dir) / "annotations.json").string();
    evtad::save_event_csv(events_path, scene.stream);
    evtad::save_annotations(ann_path, scene.annotations);

    print_summary({{"cmd", "synth"},
                   {"events", events_path},
                   {"annotations", ann_path},
                   {"n_events", scene.stream.events.size()},
                   {"n_instances", scene.annotations.instances.size()},
                   {"seed", cfg.seed}});
    return 0;
}

// ----------------------------------------------------------------- rate

int run_rate(const std::string& events_path, int width, int height,
             const std::string& gt_path, const std::string& roi,
             const RateFlags& rf, bool normalize, const std::string& out_path) {
    evtad::EventStream s = load_events(events_path, width, height);
    if (!roi.empty()) {
        if (gt_path.empty())
            throw std::invalid_argument("--roi needs --gt for the ROI boxes");
        const auto ann = load_gt(gt_path);
        s = evtad::crop_to_roi(s, select_rois(ann, roi).front());
    }
    evtad::RateSeries r = evtad::event_rate(s, rf.bin_width);
    if (normalize) r = evtad::robust_normalize(r, rf.percentile);
    write_rate_csv(out_path, r);

    print_summary({{"cmd", "rate"},
                   {"out", out_path},
                   {"n_bins", r.values.size()},
                   {"bin_width", r.bin_width},
                   {"normalized", r.normalized}});
    return 0;
}

// -------------------------------------------------------------- propose

struct ProposeFlags {
    std::string method = "retag";
    double lambda = 0.5;
    bool lambda_given = false;
    double mu = -1.0;
    double nms = 0.95;
    double min_dur = 2.0;
    evtad::SlidingWindowConfig sliding;
};

std::vector<evtad::Proposal> propose_roi(const evtad::EventStream& roi_stream,
                                         const RateFlags& rf,
                                         const ProposeFlags& pf) {
    if (pf.method == "sliding") {
        return evtad::sliding_window(
            static_cast<double>(roi_stream.t_begin) * 1e-6,
            static_cast<double>(roi_stream.t_end) * 1e-6, pf.sliding);
    }
    const evtad::RateSeries raw = evtad::event_rate(roi_stream, rf.bin_width);
    evtad::ProposalConfig cfg;
    cfg.min_duration = pf.min_dur;
    cfg.nms_tiou = pf.nms;
    // An explicit --lambda / --mu collapses the threshold grid to that
    // single value; otherwise the full grid is swept.
    if (pf.lambda_given) cfg.lambda_grid = {pf.lambda};
    if (pf.mu >= 0.0) cfg.mu_grid = {pf.mu};
    if (pf.method == "etag") return evtad::event_tag(raw, cfg);
    const evtad::RateSeries norm = evtad::robust_normalize(raw, rf.percentile);
    if (pf.method == "watershed")
        return evtad::watershed_proposals(norm, pf.lambda, pf.min_dur);
    return evtad::retag(norm, cfg);
}

int run_propose(const std::string& events_path, int width, int height,
                const std::string& gt_path, const std::string& roi,
                const RateFlags& rf, const ProposeFlags& pf, int jobs,
                const std::string& out_path) {
    const evtad::EventStream s = load_events(events_path, width, height);
    const auto ann = load_gt(gt_path);
    const auto rois = select_rois(ann, roi);

    std::vector<std::vector<evtad::Detection>> per_roi(rois.size());
    parallel_for(rois.size(), jobs, [&](std::size_t i) {
        const auto cropped = evtad::crop_to_roi(s, rois[i]);
        std::vector<evtad::Detection> out;
        for (const auto& p : propose_roi(cropped, rf, pf))
            out.push_back(evtad::Detection{rois[i].roi_id, p.interval, p.score, ""});
        per_roi[i] = std::move(out);
    });

    std::vector<evtad::Detection> all;
    ordered_json counts = ordered_json::object();
    for (std::size_t i = 0; i < rois.size(); ++i) {
        counts[rois[i].roi_id] = per_roi[i].size();
        all.insert(all.end(), per_roi[i].begin(), per_roi[i].end());
        std::cerr << "propose: " << rois[i].roi_id << " -> " << per_roi[i].size()
                  << " proposals\n";
    }
    evtad::save_detections(out_path, all, /*with_label=*/false);

    print_summary({{"cmd", "propose"},
                   {"method", pf.method},
                   {"out", out_path},
                   {"n_proposals", all.size()},
                   {"per_roi", counts}});
    return 0;
}

// ------------------------------------------------------------- snapshot

int run_snapshot(const std::string& events_path, int width, int height,
                 const std::string& gt_path, const std::string& roi, double t,
                 const RepresentFlags& rp, bool resize,
                 const std::string& out_path) {
    evtad::EventStream s = load_events(events_path, width, height);
    if (!roi.empty()) {
        if (gt_path.empty())
            throw std::invalid_argument("--roi needs --gt for the ROI boxes");
        const auto ann = load_gt(gt_path);
        s = evtad::crop_to_roi(s, select_rois(ann, roi).front());
    }
    evtad::Grid g = rp.kind == "timemap" ? evtad::time_map(s, t, rp.tau)
                                         : evtad::event_histogram(s, t, rp.window);
    if (resize) g = evtad::resize_grid(g, rp.out_h, rp.out_w);

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write grid file: " + out_path);
    for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) out << (x ? "," : "") << g.at(y, x);
        out << "\n";
    }

    print_summary({{"cmd", "snapshot"},
                   {"out", out_path},
                   {"kind", rp.kind},
                   {"t", t},
                   {"h", g.h},
                   {"w", g.w}});
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
    std::string task = "atsn";
    double pos_tiou = 0.7;
    int neg_keep = 10;
    double snap_window = 5.0;
    double snap_stride = 0.5;
    evtad::TrainConfig train;
};

int run_train(const std::string& events_path, int width, int height,
              const std::string& gt_path, const RateFlags& rf,
              const RepresentFlags& rp, const TrainFlags& tf, int jobs,
              const std::string& out_path) {
    const evtad::EventStream s = load_events(events_path, width, height);
    const auto ann = load_gt(gt_path);
    const auto gts = evtad::gt_groups_from_annotations(ann);

    evtad::FeaturizeConfig feat;
    feat.represent = rp.represent();
    feat.encoder.patches = rp.patches;

    std::vector<std::vector<evtad::FeatureVector>> xs(ann.rois.size());
    std::vector<std::vector<int>> ys(ann.rois.size());
    parallel_for(ann.rois.size(), jobs, [&](std::size_t i) {
        const auto cropped = evtad::crop_to_roi(s, ann.rois[i]);
        const auto git = gts.find(ann.rois[i].roi_id);
        const std::vector<evtad::Interval> gt =
            git == gts.end() ? std::vector<evtad::Interval>{} : git->second;
        if (tf.task == "snapshot") {
            evtad::snapshot_training_set(cropped, gt, tf.snap_window,
                                         tf.snap_stride, feat.represent,
                                         feat.encoder, xs[i], ys[i]);
            return;
        }
        const auto raw = evtad::event_rate(cropped, rf.bin_width);
        const auto norm = evtad::robust_normalize(raw, rf.percentile);
        const auto labeled =
            evtad::label_proposals(evtad::retag(norm), gt, tf.pos_tiou,
                                   tf.neg_keep, roi_seed(tf.train.seed, i));
        for (const auto& lp : labeled) {
            xs[i].push_back(
                evtad::featurize_proposal(cropped, lp.proposal.interval, feat));
            ys[i].push_back(lp.label);
        }
    });

    std::vector<evtad::FeatureVector> all_x;
    std::vector<int> all_y;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        all_x.insert(all_x.end(), xs[i].begin(), xs[i].end());
        all_y.insert(all_y.end(), ys[i].begin(), ys[i].end());
    }
    std::size_t n_pos = 0;
    for (int y : all_y) n_pos += static_cast<std::size_t>(y);
    std::cerr << "train: " << all_x.size() << " examples (" << n_pos
              << " positive) from " << ann.rois.size() << " ROIs\n";
    if (all_x.empty())
        throw std::invalid_argument("train: no training examples were produced");

    const evtad::Model model = evtad::train(all_x, all_y, tf.train);

    evtad::Checkpoint ckpt;
    ckpt.model = model;
    ckpt.kind = tf.task;
    ckpt.features = feat;
    ckpt.w_pos = tf.train.w_pos;
    ckpt.w_neg = tf.train.w_neg;
    evtad::save_checkpoint(out_path, ckpt);

    print_summary({{"cmd", "train"},
                   {"task", tf.task},
                   {"out", out_path},
                   {"n_examples", all_x.size()},
                   {"n_positive", n_pos},
                   {"hidden", tf.train.hidden},
                   {"epochs", tf.train.epochs},
                   {"seed", tf.train.seed}});
    return 0;
}

// --------------------------------------------------------------- detect

struct DetectFlags {
    std::string method = "atsn";
    std::string model_path;
    double min_score = 0.0;
    double nms = 0.6;
    double pos_tiou = 0.5;  // oracle scorer threshold
    int morph_kernel = 15;
    bool no_morph = false;
    double snap_window = 5.0;
    double snap_stride = 0.5;
};

int run_detect(const std::string& events_path, int width, int height,
               const std::string& gt_path, const std::string& roi,
               const RateFlags& rf, const ProposeFlags& pf,
               const DetectFlags& df, int jobs, const std::string& out_path) {
    const evtad::EventStream s = load_events(events_path, width, height);
    const auto ann = load_gt(gt_path);
    const auto rois = select_rois(ann, roi);
    const auto gts = evtad::gt_groups_from_annotations(ann);

    evtad::Checkpoint ckpt;
    if (df.method != "perfect") {
        if (df.model_path.empty())
            throw std::invalid_argument("detect: --model is required for method '" +
                                        df.method + "'");
        require_input(df.model_path);
        ckpt = evtad::load_checkpoint(df.model_path);
        const std::string want = df.method == "bottomup" ? "snapshot" : "atsn";
        if (ckpt.kind != want)
            throw std::invalid_argument("detect: model kind '" + ckpt.kind +
                                        "' does not fit method '" + df.method +
                                        "' (expected '" + want + "')");
    }

    evtad::DetectConfig dcfg;
    dcfg.rate.bin_width = rf.bin_width;
    dcfg.rate.percentile = rf.percentile;
    dcfg.proposals.min_duration = pf.min_dur;
    dcfg.proposals.nms_tiou = pf.nms;
    dcfg.features = ckpt.features;
    dcfg.detection_nms_tiou = df.nms;
    dcfg.min_score = df.min_score;

    evtad::BottomUpConfig bcfg;
    bcfg.window = df.snap_window;
    bcfg.stride = df.snap_stride;
    bcfg.morph_kernel = df.no_morph ? 0 : df.morph_kernel;
    bcfg.represent = ckpt.features.represent;
    bcfg.encoder = ckpt.features.encoder;

    std::vector<std::vector<evtad::Detection>> per_roi(rois.size());
    parallel_for(rois.size(), jobs, [&](std::size_t i) {
        const auto cropped = evtad::crop_to_roi(s, rois[i]);
        if (df.method == "bottomup") {
            auto dets =
                evtad::bottomup_detect(cropped, rois[i].roi_id, ckpt.model, bcfg);
            if (df.min_score > 0.0)
                std::erase_if(dets, [&](const evtad::Detection& d) {
                    return d.score < df.min_score;
                });
            per_roi[i] = std::move(dets);
            return;
        }
        evtad::ProposalScorer scorer;
        if (df.method == "perfect") {
            const auto git = gts.find(rois[i].roi_id);
            scorer = evtad::perfect_scorer(
                git == gts.end() ? std::vector<evtad::Interval>{} : git->second,
                df.pos_tiou);
        } else {
            scorer = evtad::model_scorer(ckpt.model, ckpt.features);
        }
        per_roi[i] = evtad::detect(cropped, rois[i].roi_id, dcfg, scorer);
    });

    std::vector<evtad::Detection> all;
    for (std::size_t i = 0; i < rois.size(); ++i) {
        all.insert(all.end(), per_roi[i].begin(), per_roi[i].end());
        std::cerr << "detect: " << rois[i].roi_id << " -> " << per_roi[i].size()
                  << " detections\n";
    }
    evtad::save_detections(out_path, all);

    print_summary({{"cmd", "detect"},
                   {"method", df.method},
                   {"out", out_path},
                   {"n_detections", all.size()}});
    return 0;
}

// ----------------------------------------------------------------- eval

int run_eval(const std::string& pred_path, const std::string& gt_path,
             const std::vector<std::string>& metrics, const EvalFlags& ef,
             const std::string& out_path) {
    require_input(pred_path);
    const auto dets = evtad::load_detections(pred_path);
    const auto ann = load_gt(gt_path);
    const auto gts = evtad::gt_groups_from_annotations(ann);
    const evtad::EvalConfig cfg = ef.config();

    for (const auto& m : metrics)
        if (m != "ar" && m != "map")
            throw std::invalid_argument("eval: unknown metric '" + m +
                                        "' (expected ar, map)");
    const bool want_ar =
        std::find(metrics.begin(), metrics.end(), "ar") != metrics.end();
    const bool want_map =
        std::find(metrics.begin(), metrics.end(), "map") != metrics.end();

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write report file: " + out_path);
    out << "metric,threshold/top_n,value\n";

    ordered_json summary{{"cmd", "eval"}, {"out", out_path},
                         {"n_detections", dets.size()}};
    if (want_ar) {
        const auto ar = evtad::average_recall(
            evtad::proposal_groups_from_detections(dets), gts, cfg);
        ordered_json j = ordered_json::object();
        for (std::size_t i = 0; i < ar.top_n.size(); ++i) {
            out << "ar," << ar.top_n[i] << "," << ar.ar[i] << "\n";
            j[std::to_string(ar.top_n[i])] = ar.ar[i];
        }
        summary["ar"] = j;
    }
    if (want_map) {
        const auto m = evtad::mean_ap(dets, gts, cfg);
        ordered_json j = ordered_json::object();
        for (std::size_t i = 0; i < m.thresholds.size(); ++i) {
            out << "ap," << num_str(m.thresholds[i]) << "," << m.ap[i] << "\n";
            j[num_str(m.thresholds[i])] = m.ap[i];
        }
        out << "map,mean," << m.mean << "\n";
        summary["map"] = m.mean;
        summary["ap"] = j;
    }
    print_summary(summary);
    return 0;
}

// --------------------------------------------------------------- report

int run_report(const std::string& events_path, int width, int height,
               const std::string& gt_path, const std::string& pred_path,
               const RateFlags& rf, bool normalize, const EvalFlags& ef,
               int jobs, const std::string& out_dir) {
    const evtad::EventStream s = load_events(events_path, width, height);
    const auto ann = load_gt(gt_path);
    require_input(pred_path);
    const auto dets = evtad::load_detections(pred_path);
    const auto gts = evtad::gt_groups_from_annotations(ann);
    const evtad::EvalConfig cfg = ef.config();

    std::filesystem::create_directories(out_dir);
    std::vector<std::string> rate_paths(ann.rois.size());
    parallel_for(ann.rois.size(), jobs, [&](std::size_t i) {
        const auto cropped = evtad::crop_to_roi(s, ann.rois[i]);
        evtad::RateSeries r = evtad::event_rate(cropped, rf.bin_width);
        if (normalize) r = evtad::robust_normalize(r, rf.percentile);
        const std::string path =
            (std::filesystem::path(out_dir) / ("rate_" + ann.rois[i].roi_id + ".csv"))
                .string();
        write_rate_csv(path, r);
        rate_paths[i] = path;
    });

    const std::string table_path =
        (std::filesystem::path(out_dir) / "per_roi_ap.csv").string();
    {
        std::ofstream out(table_path);
        if (!out) throw std::runtime_error("cannot write report file: " + table_path);
        evtad::write_per_roi_csv(out, evtad::per_roi_report(dets, gts, cfg), cfg);
    }

    print_summary({{"cmd", "report"},
                   {"out_dir", out_dir},
                   {"per_roi_ap", table_path},
                   {"rate_curves", rate_paths}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evtad — event-stream temporal action detection toolkit"};
    app.require_subcommand(1);

    // Shared bindings; each subcommand registers only the ones it uses.
    std::string events_path, gt_path, pred_path, out_path, roi, config_path;
    std::string model_path;
    int width = 0, height = 0, jobs = 1;
    std::uint64_t seed = 0;
    RateFlags rate_flags;
    EvalFlags eval_flags;
    RepresentFlags rep_flags;
    ProposeFlags prop_flags;
    TrainFlags train_flags;
    DetectFlags det_flags;
    bool normalize = false, resize = false;
    double snap_t = 0.0;
    int hot_pixels = 0;
    double hot_rate = 1000.0;
    std::vector<std::string> metrics = {"ar", "map"};

    auto add_events = [&](CLI::App* sc) {
        sc->add_option("--events", events_path, "Event CSV")->required();
        sc->add_option("--width", width, "Sensor width when the CSV lacks metadata");
        sc->add_option("--height", height, "Sensor height when the CSV lacks metadata");
    };
    auto add_jobs = [&](CLI::App* sc) {
        sc->add_option("--jobs", jobs, "Worker threads over ROIs")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    };
    auto add_config_file = [&](CLI::App* sc) {
        sc->set_config("--config", "", "Default flag values (TOML/INI); explicit flags win");
    };

    // synth keeps --config for the scene description itself.
    auto* sc_synth = app.add_subcommand("synth", "Generate a synthetic event scene");
    sc_synth->add_option("--config", config_path, "Scene description (JSON)")
        ->required();
    sc_synth->add_option("--out", out_path, "Output directory")->required();
    auto* seed_opt =
        sc_synth->add_option("--seed", seed, "Override the scene seed");
    sc_synth->add_option("--hot-pixels", hot_pixels, "Add this many hot pixels");
    sc_synth->add_option("--hot-rate", hot_rate, "Hot pixel rate, events/s")
        ->capture_default_str();

    auto* sc_rate = app.add_subcommand("rate", "Per-bin event rate as CSV");
    add_events(sc_rate);
    sc_rate->add_option("--gt", gt_path, "Annotation JSON (for --roi boxes)");
    sc_rate->add_option("--roi", roi, "Restrict to one ROI id");
    add_rate_flags(sc_rate, rate_flags);
    sc_rate->add_flag("--normalize", normalize, "Emit robustly normalized values");
    sc_rate->add_option("--out", out_path, "Output CSV")->required();
    add_config_file(sc_rate);

    auto* sc_prop = app.add_subcommand("propose", "Temporal proposals per ROI");
    add_events(sc_prop);
    sc_prop->add_option("--gt", gt_path, "Annotation JSON (ROI boxes)")->required();
    sc_prop->add_option("--roi", roi, "Restrict to one ROI id");
    sc_prop->add_option("--method", prop_flags.method, "Proposal method")
        ->check(CLI::IsMember({"retag", "etag", "watershed", "sliding"}))
        ->capture_default_str();
    add_rate_flags(sc_prop, rate_flags);
    auto* lambda_opt = sc_prop->add_option(
        "--lambda", prop_flags.lambda,
        "Watershed threshold; for retag/etag collapses the grid to this value");
    sc_prop->add_option("--mu", prop_flags.mu,
                        "Merge duty-cycle; collapses the grid to this value");
    sc_prop->add_option("--nms", prop_flags.nms, "Proposal dedupe tIoU")
        ->capture_default_str();
    sc_prop->add_option("--min-dur", prop_flags.min_dur,
                        "Drop proposals shorter than this, seconds")
        ->capture_default_str();
    sc_prop->add_option("--widths", prop_flags.sliding.n_widths,
                        "Sliding: number of window widths")
        ->capture_default_str();
    sc_prop->add_option("--w-min", prop_flags.sliding.w_min,
                        "Sliding: smallest width, seconds")
        ->capture_default_str();
    sc_prop->add_option("--w-max", prop_flags.sliding.w_max,
                        "Sliding: largest width, seconds")
        ->capture_default_str();
    sc_prop->add_option("--stride", prop_flags.sliding.stride,
                        "Sliding: stride as a fraction of the width")
        ->capture_default_str();
    add_jobs(sc_prop);
    sc_prop->add_option("--out", out_path, "Proposal JSON")->required();
    add_config_file(sc_prop);

    auto* sc_snap = app.add_subcommand("snapshot", "Dump one grid as CSV");
    add_events(sc_snap);
    sc_snap->add_option("--gt", gt_path, "Annotation JSON (for --roi boxes)");
    sc_snap->add_option("--roi", roi, "Restrict to one ROI id");
    sc_snap->add_option("--t", snap_t, "Snapshot center time, seconds")->required();
    add_represent_flags(sc_snap, rep_flags);
    sc_snap->add_flag("--resize", resize, "Resize to --out-h x --out-w");
    sc_snap->add_option("--out", out_path, "Output CSV")->required();
    add_config_file(sc_snap);

    auto* sc_train = app.add_subcommand("train", "Fit the detection head");
    add_events(sc_train);
    sc_train->add_option("--gt", gt_path, "Annotation JSON")->required();
    sc_train->add_option("--task", train_flags.task,
                         "atsn (proposal-level) or snapshot (per-snapshot)")
        ->check(CLI::IsMember({"atsn", "snapshot"}))
        ->capture_default_str();
    add_rate_flags(sc_train, rate_flags);
    add_represent_flags(sc_train, rep_flags);
    sc_train->add_option("--pos-tiou", train_flags.pos_tiou,
                         "Label proposals positive above this tIoU")
        ->capture_default_str();
    sc_train->add_option("--neg-keep", train_flags.neg_keep,
                         "Keep about one negative in this many")
        ->capture_default_str();
    sc_train->add_option("--snap-window", train_flags.snap_window,
                         "Snapshot task: window width, seconds")
        ->capture_default_str();
    sc_train->add_option("--snap-stride", train_flags.snap_stride,
                         "Snapshot task: stride, seconds")
        ->capture_default_str();
    sc_train->add_option("--lr", train_flags.train.lr, "Learning rate")
        ->capture_default_str();
    sc_train->add_option("--momentum", train_flags.train.momentum, "SGD momentum")
        ->capture_default_str();
    sc_train->add_option("--batch", train_flags.train.batch_size, "Batch size")
        ->capture_default_str();
    sc_train->add_option("--epochs", train_flags.train.epochs, "Training epochs")
        ->capture_default_str();
    sc_train->add_option("--hidden", train_flags.train.hidden, "Hidden units")
        ->capture_default_str();
    sc_train->add_option("--w-pos", train_flags.train.w_pos, "Positive class weight")
        ->capture_default_str();
    sc_train->add_option("--w-neg", train_flags.train.w_neg, "Negative class weight")
        ->capture_default_str();
    sc_train->add_option("--val-frac", train_flags.train.val_fraction,
                         "Validation fraction (keeps the best epoch)")
        ->capture_default_str();
    sc_train->add_option("--seed", train_flags.train.seed,
                         "Seed for splits, shuffles, init")
        ->capture_default_str();
    add_jobs(sc_train);
    sc_train->add_option("--out", out_path, "Model checkpoint (JSON)")->required();
    add_config_file(sc_train);

    auto* sc_det = app.add_subcommand("detect", "End-to-end detections per ROI");
    add_events(sc_det);
    sc_det->add_option("--gt", gt_path, "Annotation JSON (ROI boxes)")->required();
    sc_det->add_option("--roi", roi, "Restrict to one ROI id");
    sc_det->add_option("--method", det_flags.method, "Detection method")
        ->check(CLI::IsMember({"atsn", "bottomup", "perfect"}))
        ->capture_default_str();
    sc_det->add_option("--model", det_flags.model_path, "Model checkpoint");
    add_rate_flags(sc_det, rate_flags);
    sc_det->add_option("--proposal-nms", prop_flags.nms, "Proposal dedupe tIoU")
        ->capture_default_str();
    sc_det->add_option("--min-dur", prop_flags.min_dur,
                       "Drop proposals shorter than this, seconds")
        ->capture_default_str();
    sc_det->add_option("--min-score", det_flags.min_score,
                       "Drop detections scored below this")
        ->capture_default_str();
    sc_det->add_option("--nms", det_flags.nms, "Detection NMS tIoU")
        ->capture_default_str();
    sc_det->add_option("--pos-tiou", det_flags.pos_tiou,
                       "Oracle method: score 1 above this tIoU")
        ->capture_default_str();
    sc_det->add_option("--morph-kernel", det_flags.morph_kernel,
                       "Bottom-up: closing kernel (odd)")
        ->capture_default_str();
    sc_det->add_flag("--no-morph", det_flags.no_morph,
                     "Bottom-up: disable the closing");
    sc_det->add_option("--snap-window", det_flags.snap_window,
                       "Bottom-up: window width, seconds")
        ->capture_default_str();
    sc_det->add_option("--snap-stride", det_flags.snap_stride,
                       "Bottom-up: stride, seconds")
        ->capture_default_str();
    add_jobs(sc_det);
    sc_det->add_option("--out", out_path, "Detection JSON")->required();
    add_config_file(sc_det);

    auto* sc_eval = app.add_subcommand("eval", "AR / mAP report");
    sc_eval->add_option("--pred", pred_path, "Detection JSON")->required();
    sc_eval->add_option("--gt", gt_path, "Annotation JSON")->required();
    sc_eval->add_option("--metrics", metrics, "Metrics to compute")
        ->delimiter(',')
        ->capture_default_str();
    add_eval_flags(sc_eval, eval_flags);
    sc_eval->add_option("--out", out_path, "Report CSV")->required();
    add_config_file(sc_eval);

    auto* sc_rep = app.add_subcommand("report", "Rate curves + per-ROI AP table");
    add_events(sc_rep);
    sc_rep->add_option("--gt", gt_path, "Annotation JSON")->required();
    sc_rep->add_option("--pred", pred_path, "Detection JSON")->required();
    add_rate_flags(sc_rep, rate_flags);
    sc_rep->add_flag("--normalize", normalize, "Normalize the rate curves");
    add_eval_flags(sc_rep, eval_flags);
    add_jobs(sc_rep);
    sc_rep->add_option("--out", out_path, "Output directory")->required();
    add_config_file(sc_rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    prop_flags.lambda_given = lambda_opt->count() > 0;

    try {
        if (sc_synth->parsed())
            return run_synth(config_path, out_path, seed_opt->count() > 0, seed,
                             hot_pixels, hot_rate);
        if (sc_rate->parsed())
            return run_rate(events_path, width, height, gt_path, roi, rate_flags,
                            normalize, out_path);
        if (sc_prop->parsed())
            return run_propose(events_path, width, height, gt_path, roi,
                               rate_flags, prop_flags, jobs, out_path);
        if (sc_snap->parsed())
            return run_snapshot(events_path, width, height, gt_path, roi, snap_t,
                                rep_flags, resize, out_path);
        if (sc_train->parsed())
            return run_train(events_path, width, height, gt_path, rate_flags,
                             rep_flags, train_flags, jobs, out_path);
        if (sc_det->parsed())
            return run_detect(events_path, width, height, gt_path, roi,
                              rate_flags, prop_flags, det_flags, jobs, out_path);
        if (sc_eval->parsed())
            return run_eval(pred_path, gt_path, metrics, eval_flags, out_path);
        if (sc_rep->parsed())
            return run_report(events_path, width, height, gt_path, pred_path,
                              rate_flags, normalize, eval_flags, jobs, out_path);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const MissingInput& m) {
        std::cerr << "error: input file does not exist: " << m.path << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
}
