#pragma once

// Proposal classification.
//
// A proposal is augmented with flanking start/end stages, each stage is
// sampled at the midpoints of equal sub-intervals, every sampled
// timestamp becomes a snapshot grid that a pooled-patch encoder turns
// into a fixed-length vector, per-stage vectors are consensus-averaged,
// and the start|core|end concatenation feeds a small one-hidden-layer
// network trained with weighted binary cross-entropy (SGD + momentum,
// hand-derived gradients).  A tIoU oracle scorer stands in for the
// network when an upper bound on the pipeline is needed.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evtad/events.hpp"
#include "evtad/intervals.hpp"
#include "evtad/proposals.hpp"
#include "evtad/random.hpp"
#include "evtad/represent.hpp"

namespace evtad {

using FeatureVector = std::vector<double>;

// --- temporal augmentation and sampling ---

struct AugmentedProposal {
    Interval start_stage;
    Interval core;
    Interval end_stage;
};

// Flank the proposal with stages of width duration / w_divisor on each
// side.  Stages may reach before the stream start or past its end; the
// snapshots taken there are simply empty.
inline AugmentedProposal augment_proposal(const Interval& p, double w_divisor = 3.0) {
    validate_interval(p, "augment_proposal");
    if (w_divisor <= 0.0)
        throw std::invalid_argument("augment_proposal: divisor must be positive");
    const double d = p.duration() / w_divisor;
    return AugmentedProposal{Interval{p.t_start - d, p.t_start}, p,
                             Interval{p.t_end, p.t_end + d}};
}

// Midpoints of n equal sub-intervals of the stage.
inline std::vector<double> sample_timestamps(const Interval& stage, int n) {
    if (n < 0) throw std::invalid_argument("sample_timestamps: negative count");
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(n));
    const double step = stage.duration() / static_cast<double>(n == 0 ? 1 : n);
    for (int k = 0; k < n; ++k)
        t.push_back(stage.t_start + (static_cast<double>(k) + 0.5) * step);
    return t;
}

struct SamplingConfig {
    int n_start = 1;
    int n_core = 3;
    int n_end = 1;
};

struct StageTimestamps {
    std::vector<double> start;
    std::vector<double> core;
    std::vector<double> end;
};

inline StageTimestamps sample_timestamps(const AugmentedProposal& ap,
                                         const SamplingConfig& cfg) {
    if (cfg.n_core < 1)
        throw std::invalid_argument("sample_timestamps: need at least one core sample");
    return StageTimestamps{sample_timestamps(ap.start_stage, cfg.n_start),
                           sample_timestamps(ap.core, cfg.n_core),
                           sample_timestamps(ap.end_stage, cfg.n_end)};
}

// --- snapshot encoder ---

struct EncoderConfig {
    int patches = 2;  // P: the grid is pooled over a P x P block partition
};

inline std::size_t encoded_length(const EncoderConfig& cfg) {
    return 2 * static_cast<std::size_t>(cfg.patches) * cfg.patches + 3;
}

// Pooled-patch descriptor: per block (row-major) the mean and max, then
// global mean, global max, and the fraction of nonzero cells.
inline FeatureVector encode_snapshot(const Grid& g, const EncoderConfig& cfg = {}) {
    const int P = cfg.patches;
    if (P < 1) throw std::invalid_argument("encode_snapshot: patches must be positive");
    if (P > g.h || P > g.w)
        throw std::invalid_argument("encode_snapshot: more patches than grid cells");
    FeatureVector f;
    f.reserve(encoded_length(cfg));
    for (int by = 0; by < P; ++by) {
        const int y0 = by * g.h / P;
        const int y1 = (by + 1) * g.h / P;
        for (int bx = 0; bx < P; ++bx) {
            const int x0 = bx * g.w / P;
            const int x1 = (bx + 1) * g.w / P;
            double sum = 0.0, mx = g.at(y0, x0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const double v = g.at(y, x);
                    sum += v;
                    if (v > mx) mx = v;
                }
            f.push_back(sum / (static_cast<double>(y1 - y0) * (x1 - x0)));
            f.push_back(mx);
        }
    }
    double sum = 0.0, mx = g.values[0];
    std::size_t nonzero = 0;
    for (double v : g.values) {
        sum += v;
        if (v > mx) mx = v;
        if (v != 0.0) ++nonzero;
    }
    f.push_back(sum / static_cast<double>(g.values.size()));
    f.push_back(mx);
    f.push_back(static_cast<double>(nonzero) / static_cast<double>(g.values.size()));
    return f;
}

// Element-wise mean of equally sized vectors.
inline FeatureVector consensus(const std::vector<FeatureVector>& vs) {
    if (vs.empty()) throw std::invalid_argument("consensus: no vectors");
    FeatureVector out(vs[0].size(), 0.0);
    for (const auto& v : vs) {
        if (v.size() != out.size())
            throw std::invalid_argument("consensus: length mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
    }
    for (double& x : out) x /= static_cast<double>(vs.size());
    return out;
}

// start | core | end concatenation of per-stage consensus vectors; a
// stage with no samples contributes an explicit zero block.
inline FeatureVector assemble_feature(const std::vector<FeatureVector>& start,
                                      const std::vector<FeatureVector>& core,
                                      const std::vector<FeatureVector>& end,
                                      std::size_t feat_len) {
    FeatureVector out;
    out.reserve(3 * feat_len);
    for (const auto* stage : {&start, &core, &end}) {
        if (stage->empty()) {
            out.insert(out.end(), feat_len, 0.0);
        } else {
            FeatureVector c = consensus(*stage);
            if (c.size() != feat_len)
                throw std::invalid_argument("assemble_feature: stage length mismatch");
            out.insert(out.end(), c.begin(), c.end());
        }
    }
    return out;
}

// --- proposal featurization (augment -> sample -> snapshot -> encode) ---

struct FeaturizeConfig {
    double w_divisor = 3.0;
    SamplingConfig sampling;
    RepresentConfig represent;
    EncoderConfig encoder;
};

inline Grid snapshot_at(const EventStream& s, double t_center,
                        const RepresentConfig& cfg) {
    Grid g = cfg.kind == GridKind::histogram ? event_histogram(s, t_center, cfg.window)
                                             : time_map(s, t_center, cfg.tau);
    return resize_grid(g, cfg.out_h, cfg.out_w);
}

inline FeatureVector featurize_proposal(const EventStream& roi_stream,
                                        const Interval& proposal,
                                        const FeaturizeConfig& cfg) {
    const AugmentedProposal ap = augment_proposal(proposal, cfg.w_divisor);
    const StageTimestamps ts = sample_timestamps(ap, cfg.sampling);
    auto encode_all = [&](const std::vector<double>& stamps) {
        std::vector<FeatureVector> fs;
        fs.reserve(stamps.size());
        for (double t : stamps)
            fs.push_back(encode_snapshot(snapshot_at(roi_stream, t, cfg.represent),
                                         cfg.encoder));
        return fs;
    };
    return assemble_feature(encode_all(ts.start), encode_all(ts.core),
                            encode_all(ts.end), encoded_length(cfg.encoder));
}

// --- labeling ---

struct LabeledProposal {
    Proposal proposal;
    int label = 0;  // 1 = positive
};

// A proposal is positive iff its best tIoU against the ground truth is
// strictly above pos_tiou.  Negatives are thinned by neg_keep_factor
// (about one in that many survives) with a seeded draw so the training
// set is reproducible.
inline std::vector<LabeledProposal> label_proposals(const std::vector<Proposal>& ps,
                                                    const std::vector<Interval>& gt,
                                                    double pos_tiou,
                                                    int neg_keep_factor = 10,
                                                    std::uint64_t seed = 0) {
    if (pos_tiou < 0.0 || pos_tiou >= 1.0)
        throw std::invalid_argument("label_proposals: pos_tiou must be in [0, 1)");
    if (neg_keep_factor < 1)
        throw std::invalid_argument("label_proposals: keep factor must be >= 1");
    std::vector<LabeledProposal> out;
    std::vector<std::size_t> neg_idx;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        double best = 0.0;
        for (const Interval& g : gt) best = std::max(best, tiou(ps[i].interval, g));
        if (best > pos_tiou)
            out.push_back(LabeledProposal{ps[i], 1});
        else
            neg_idx.push_back(i);
    }
    if (neg_keep_factor == 1) {
        for (std::size_t i : neg_idx) out.push_back(LabeledProposal{ps[i], 0});
        return out;
    }
    const std::size_t keep =
        (neg_idx.size() + static_cast<std::size_t>(neg_keep_factor) / 2) /
        static_cast<std::size_t>(neg_keep_factor);
    auto rng = substream(seed, /*role=*/0x6C616265u);  // labeling stream
    for (std::size_t k : sample_indices(neg_idx.size(), keep, rng))
        out.push_back(LabeledProposal{ps[neg_idx[k]], 0});
    return out;
}

// --- the classifier ---

// One hidden tanh layer feeding a single logit.
struct Model {
    int in_dim = 0;
    int hidden = 0;
    std::vector<double> w1;  // hidden x in_dim, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;

    double logit(const FeatureVector& x) const {
        if (static_cast<int>(x.size()) != in_dim)
            throw std::invalid_argument("model: feature length mismatch");
        double z2 = b2;
        for (int h = 0; h < hidden; ++h) {
            double z1 = b1[static_cast<std::size_t>(h)];
            const double* row = w1.data() + static_cast<std::size_t>(h) * in_dim;
            for (int i = 0; i < in_dim; ++i) z1 += row[i] * x[static_cast<std::size_t>(i)];
            z2 += w2[static_cast<std::size_t>(h)] * std::tanh(z1);
        }
        return z2;
    }

    double predict(const FeatureVector& x) const {
        return 1.0 / (1.0 + std::exp(-logit(x)));
    }
};

struct ModelGrads {
    std::vector<double> w1, b1, w2;
    double b2 = 0.0;

    explicit ModelGrads(const Model& m)
        : w1(m.w1.size(), 0.0), b1(m.b1.size(), 0.0), w2(m.w2.size(), 0.0) {}
};

inline double softplus(double z) {
    // log(1 + e^z) without overflow for large |z|.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Mean weighted binary cross-entropy of a batch; when `grads` is given,
// accumulates the analytic gradient of that mean into it.
inline double batch_loss(const Model& m, const std::vector<const FeatureVector*>& xs,
                         const std::vector<int>& ys, double w_pos, double w_neg,
                         ModelGrads* grads = nullptr) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("batch_loss: bad batch");
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    double loss = 0.0;
    std::vector<double> a(static_cast<std::size_t>(m.hidden));
    for (std::size_t s = 0; s < xs.size(); ++s) {
        const FeatureVector& x = *xs[s];
        if (static_cast<int>(x.size()) != m.in_dim)
            throw std::invalid_argument("batch_loss: feature length mismatch");
        double z2 = m.b2;
        for (int h = 0; h < m.hidden; ++h) {
            double z1 = m.b1[static_cast<std::size_t>(h)];
            const double* row = m.w1.data() + static_cast<std::size_t>(h) * m.in_dim;
            for (int i = 0; i < m.in_dim; ++i)
                z1 += row[i] * x[static_cast<std::size_t>(i)];
            a[static_cast<std::size_t>(h)] = std::tanh(z1);
            z2 += m.w2[static_cast<std::size_t>(h)] * a[static_cast<std::size_t>(h)];
        }
        const int y = ys[s];
        const double wy = y ? w_pos : w_neg;
        loss += wy * (softplus(z2) - static_cast<double>(y) * z2) * inv_n;
        if (grads) {
            const double sig = 1.0 / (1.0 + std::exp(-z2));
            const double dz2 = wy * (sig - static_cast<double>(y)) * inv_n;
            grads->b2 += dz2;
            for (int h = 0; h < m.hidden; ++h) {
                const double ah = a[static_cast<std::size_t>(h)];
                grads->w2[static_cast<std::size_t>(h)] += dz2 * ah;
                const double dz1 =
                    dz2 * m.w2[static_cast<std::size_t>(h)] * (1.0 - ah * ah);
                grads->b1[static_cast<std::size_t>(h)] += dz1;
                double* grow = grads->w1.data() + static_cast<std::size_t>(h) * m.in_dim;
                for (int i = 0; i < m.in_dim; ++i)
                    grow[i] += dz1 * x[static_cast<std::size_t>(i)];
            }
        }
    }
    return loss;
}

struct TrainConfig {
    double lr = 0.001;
    double momentum = 0.9;
    int batch_size = 128;
    int epochs = 50;
    int hidden = 16;
    double w_pos = 1.0;
    double w_neg = 1.0;
    double val_fraction = 0.0;  // > 0 keeps the best-validation epoch
    std::uint64_t seed = 0;
};

// Mini-batch SGD with momentum.  Fully deterministic for a given seed:
// initialization, the train/validation split, and every epoch's
// shuffle come from separate derived streams.
inline Model train(const std::vector<FeatureVector>& x, const std::vector<int>& y,
                   const TrainConfig& cfg = {}) {
    if (x.empty() || x.size() != y.size())
        throw std::invalid_argument("train: empty or mismatched training set");
    bool has_pos = false, has_neg = false;
    for (int v : y) (v ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument("train: need both classes in the training set");
    if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.hidden < 1 || cfg.lr <= 0.0)
        throw std::invalid_argument("train: bad hyperparameters");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw std::invalid_argument("train: momentum must be in [0, 1)");

    const int in_dim = static_cast<int>(x[0].size());
    Model m;
    m.in_dim = in_dim;
    m.hidden = cfg.hidden;
    m.w1.resize(static_cast<std::size_t>(cfg.hidden) * in_dim);
    m.b1.assign(static_cast<std::size_t>(cfg.hidden), 0.0);
    m.w2.resize(static_cast<std::size_t>(cfg.hidden));
    {
        auto rng = substream(cfg.seed, 0x696E6974u);  // init stream
        const double r1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& w : m.w1) w = uniform_range(rng, -r1, r1);
        const double r2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
        for (double& w : m.w2) w = uniform_range(rng, -r2, r2);
    }

    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t n_val = 0;
    if (cfg.val_fraction > 0.0) {
        auto rng = substream(cfg.seed, 0x73706C69u);  // split stream
        shuffle(order, rng);
        n_val = static_cast<std::size_t>(
            std::llround(cfg.val_fraction * static_cast<double>(x.size())));
        n_val = std::min(n_val, x.size() - 1);
    }
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
    if (train_idx.empty())
        throw std::invalid_argument("train: validation split leaves no training data");

    ModelGrads vel(m);  // momentum velocity, same shape as the gradients
    Model best = m;
    double best_val = std::numeric_limits<double>::infinity();

    auto eval_set = [&](const std::vector<std::size_t>& idx) {
        std::vector<const FeatureVector*> xs;
        std::vector<int> ys;
        xs.reserve(idx.size());
        ys.reserve(idx.size());
        for (std::size_t i : idx) {
            xs.push_back(&x[i]);
            ys.push_back(y[i]);
        }
        return batch_loss(m, xs, ys, cfg.w_pos, cfg.w_neg);
    };

    auto epoch_rng = substream(cfg.seed, 0x65706F63u);  // epoch shuffles
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(train_idx, epoch_rng);
        for (std::size_t off = 0; off < train_idx.size();
             off += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi =
                std::min(train_idx.size(), off + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const FeatureVector*> xs;
            std::vector<int> ys;
            xs.reserve(hi - off);
            ys.reserve(hi - off);
            for (std::size_t k = off; k < hi; ++k) {
                xs.push_back(&x[train_idx[k]]);
                ys.push_back(y[train_idx[k]]);
            }
            ModelGrads g(m);
            batch_loss(m, xs, ys, cfg.w_pos, cfg.w_neg, &g);
            for (std::size_t i = 0; i < m.w1.size(); ++i) {
                vel.w1[i] = cfg.momentum * vel.w1[i] - cfg.lr * g.w1[i];
                m.w1[i] += vel.w1[i];
            }
            for (std::size_t i = 0; i < m.b1.size(); ++i) {
                vel.b1[i] = cfg.momentum * vel.b1[i] - cfg.lr * g.b1[i];
                m.b1[i] += vel.b1[i];
            }
            for (std::size_t i = 0; i < m.w2.size(); ++i) {
                vel.w2[i] = cfg.momentum * vel.w2[i] - cfg.lr * g.w2[i];
                m.w2[i] += vel.w2[i];
            }
            vel.b2 = cfg.momentum * vel.b2 - cfg.lr * g.b2;
            m.b2 += vel.b2;
        }
        if (n_val > 0) {
            const double vl = eval_set(val_idx);
            if (vl < best_val) {
                best_val = vl;
                best = m;
            }
        }
    }
    return n_val > 0 ? best : m;
}

// tIoU oracle: 1.0 iff the proposal overlaps some ground-truth interval
// strictly above thr.  Upper-bounds what any trained scorer can do with
// the same proposal set.
inline std::vector<double> perfect_classifier(const std::vector<Proposal>& ps,
                                              const std::vector<Interval>& gt,
                                              double thr) {
    std::vector<double> out;
    out.reserve(ps.size());
    for (const auto& p : ps) {
        double best = 0.0;
        for (const Interval& g : gt) best = std::max(best, tiou(p.interval, g));
        out.push_back(best > thr ? 1.0 : 0.0);
    }
    return out;
}

// --- end-to-end detection over one ROI stream ---

struct DetectConfig {
    RateConfig rate;
    ProposalConfig proposals;
    FeaturizeConfig features;
    double detection_nms_tiou = 0.6;
    double min_score = 0.0;  // keep everything by default
    std::string label = "ED";
};

// Scores one proposal of the given ROI stream.
using ProposalScorer = std::function<double(const EventStream&, const Proposal&)>;

inline ProposalScorer model_scorer(const Model& m, const FeaturizeConfig& cfg) {
    return [m, cfg](const EventStream& s, const Proposal& p) {
        return m.predict(featurize_proposal(s, p.interval, cfg));
    };
}

inline ProposalScorer perfect_scorer(std::vector<Interval> gt, double thr) {
    return [gt = std::move(gt), thr](const EventStream&, const Proposal& p) {
        double best = 0.0;
        for (const Interval& g : gt) best = std::max(best, tiou(p.interval, g));
        return best > thr ? 1.0 : 0.0;
    };
}

// rate -> normalize -> proposals -> score -> threshold -> NMS.
inline std::vector<Detection> detect(const EventStream& roi_stream,
                                     const std::string& roi_id,
                                     const DetectConfig& cfg,
                                     const ProposalScorer& scorer) {
    const RateSeries raw = event_rate(roi_stream, cfg.rate.bin_width);
    const RateSeries norm = robust_normalize(raw, cfg.rate.percentile);
    std::vector<Detection> dets;
    for (const Proposal& p : retag(norm, cfg.proposals)) {
        const double score = scorer(roi_stream, p);
        if (score < cfg.min_score) continue;
        dets.push_back(Detection{roi_id, p.interval, score, cfg.label});
    }
    return detection_nms(std::move(dets), cfg.detection_nms_tiou);
}

// --- checkpoint I/O ---

struct Checkpoint {
    Model model;
    std::string kind;  // "atsn" (proposal-level) or "snapshot" (per-snapshot)
    FeaturizeConfig features;
    double w_pos = 1.0;
    double w_neg = 1.0;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = c.kind;
    j["in_dim"] = c.model.in_dim;
    j["hidden"] = c.model.hidden;
    j["w1"] = c.model.w1;
    j["b1"] = c.model.b1;
    j["w2"] = c.model.w2;
    j["b2"] = c.model.b2;
    j["class_weights"] = {c.w_pos, c.w_neg};
    j["features"] = {
        {"w_divisor", c.features.w_divisor},
        {"n_start", c.features.sampling.n_start},
        {"n_core", c.features.sampling.n_core},
        {"n_end", c.features.sampling.n_end},
        {"kind", c.features.represent.kind == GridKind::histogram ? "histogram" : "timemap"},
        {"window", c.features.represent.window},
        {"tau", c.features.represent.tau},
        {"out_h", c.features.represent.out_h},
        {"out_w", c.features.represent.out_w},
        {"patches", c.features.encoder.patches}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("model file: ") + e.what());
    }
    Checkpoint c;
    // Missing keys and wrong types surface as json exceptions; keep the
    // caller-facing contract (schema violation -> invalid_argument).
    try {
        if (j.at("format_version").get<int>() != 1)
            throw std::invalid_argument("model file: unsupported format version");
        c.kind = j.at("kind").get<std::string>();
        c.model.in_dim = j.at("in_dim").get<int>();
        c.model.hidden = j.at("hidden").get<int>();
        c.model.w1 = j.at("w1").get<std::vector<double>>();
        c.model.b1 = j.at("b1").get<std::vector<double>>();
        c.model.w2 = j.at("w2").get<std::vector<double>>();
        c.model.b2 = j.at("b2").get<double>();
        c.w_pos = j.at("class_weights").at(0).get<double>();
        c.w_neg = j.at("class_weights").at(1).get<double>();
        const auto& f = j.at("features");
        c.features.w_divisor = f.at("w_divisor").get<double>();
        c.features.sampling.n_start = f.at("n_start").get<int>();
        c.features.sampling.n_core = f.at("n_core").get<int>();
        c.features.sampling.n_end = f.at("n_end").get<int>();
        c.features.represent.kind = f.at("kind").get<std::string>() == "timemap"
                                        ? GridKind::timemap
                                        : GridKind::histogram;
        c.features.represent.window = f.at("window").get<double>();
        c.features.represent.tau = f.at("tau").get<double>();
        c.features.represent.out_h = f.at("out_h").get<int>();
        c.features.represent.out_w = f.at("out_w").get<int>();
        c.features.encoder.patches = f.at("patches").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("model file: ") + e.what());
    }
    if (c.model.w1.size() !=
            static_cast<std::size_t>(c.model.hidden) * c.model.in_dim ||
        c.model.b1.size() != static_cast<std::size_t>(c.model.hidden) ||
        c.model.w2.size() != static_cast<std::size_t>(c.model.hidden))
        throw std::invalid_argument("model file: parameter shape mismatch");
    return c;
}

}  // namespace evtad
