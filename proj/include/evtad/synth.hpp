#pragma once

// Seeded synthetic scenes: per-pixel Poisson background noise plus
// scripted high-rate bursts inside ROIs, with the matching annotation
// set.  Every pixel draws from its own counter-derived substream, so
// the output is reproducible no matter how generation is ordered or
// parallelized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evtad/events.hpp"
#include "evtad/random.hpp"

namespace evtad {

enum class ActionPattern { uniform, oscillating_blob };

inline const char* pattern_name(ActionPattern p) {
    return p == ActionPattern::uniform ? "uniform" : "oscillating_blob";
}

inline ActionPattern pattern_from_name(const std::string& name) {
    if (name == "uniform") return ActionPattern::uniform;
    if (name == "oscillating_blob") return ActionPattern::oscillating_blob;
    throw std::invalid_argument("scene: unknown action pattern '" + name + "'");
}

struct ActionSpec {
    std::string roi_id;
    double t_start = 0.0;  // seconds, relative to scene start
    double t_end = 0.0;
    // The burst adds events at background_rate * multiplier per pixel,
    // averaged over the ROI, on top of the background process.
    double multiplier = 0.0;
    ActionPattern pattern = ActionPattern::uniform;
    double osc_freq_hz = 1.0;  // horizontal oscillation of the blob center
};

struct SceneConfig {
    int width = 0;
    int height = 0;
    double duration = 0.0;         // seconds
    double background_rate = 0.0;  // events per second per pixel
    std::vector<BoundingBox> rois;
    std::vector<ActionSpec> actions;
    std::uint64_t seed = 0;
};

namespace detail {

// Substream roles for the scene generator.
inline constexpr std::uint64_t kRoleBackground = 0x62676E64;  // "bgnd"
inline constexpr std::uint64_t kRoleAction = 0x61637400;      // "act"
inline constexpr std::uint64_t kRoleHotSelect = 0x686F7473;   // "hots"
inline constexpr std::uint64_t kRoleHotEvents = 0x686F7465;   // "hote"

}  // namespace detail

inline void validate_scene(const SceneConfig& cfg) {
    if (cfg.width <= 0 || cfg.height <= 0)
        throw std::invalid_argument("scene: sensor dimensions must be positive");
    if (cfg.duration <= 0.0)
        throw std::invalid_argument("scene: duration must be positive");
    if (cfg.background_rate < 0.0)
        throw std::invalid_argument("scene: background rate must be non-negative");
    for (const auto& r : cfg.rois) {
        if (r.roi_id.empty())
            throw std::invalid_argument("scene: empty roi id");
        if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > cfg.width ||
            r.y + r.h > cfg.height)
            throw std::invalid_argument("scene: roi '" + r.roi_id +
                                        "' does not fit the sensor");
        std::size_t n = 0;
        for (const auto& q : cfg.rois)
            if (q.roi_id == r.roi_id) ++n;
        if (n != 1)
            throw std::invalid_argument("scene: duplicate roi id '" + r.roi_id + "'");
    }
    for (const auto& a : cfg.actions) {
        bool known = false;
        for (const auto& r : cfg.rois) known |= (r.roi_id == a.roi_id);
        if (!known)
            throw std::invalid_argument("scene: action references unknown roi '" +
                                        a.roi_id + "'");
        if (!(a.t_start >= 0.0 && a.t_start < a.t_end && a.t_end <= cfg.duration))
            throw std::invalid_argument("scene: action interval outside [0, duration] in roi '" +
                                        a.roi_id + "'");
        if (a.multiplier <= 1.0)
            throw std::invalid_argument("scene: burst multiplier must exceed 1 in roi '" +
                                        a.roi_id + "'");
        if (a.pattern == ActionPattern::oscillating_blob && a.osc_freq_hz <= 0.0)
            throw std::invalid_argument("scene: oscillation frequency must be positive");
    }
    // Within one roi, scripted actions must not overlap (touching is fine).
    for (std::size_t i = 0; i < cfg.actions.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.actions.size(); ++j) {
            const auto& a = cfg.actions[i];
            const auto& b = cfg.actions[j];
            if (a.roi_id == b.roi_id && a.t_start < b.t_end && b.t_start < a.t_end)
                throw std::invalid_argument("scene: overlapping actions in roi '" +
                                            a.roi_id + "'");
        }
}

struct Scene {
    EventStream stream;
    AnnotationSet annotations;
};

namespace detail {

// Homogeneous Poisson arrivals on [t0, t1) at the given rate, appended
// as events of one pixel.  Polarity alternates pseudo-randomly.
inline void poisson_pixel(std::vector<Event>& out, std::mt19937_64& rng, double rate,
                          double t0, double t1, std::uint16_t x, std::uint16_t y) {
    if (rate <= 0.0) return;
    double t = t0;
    for (;;) {
        t += exp_interval(rng, rate);
        if (t >= t1) break;
        Event e;
        e.t = static_cast<std::int64_t>(std::llround(t * 1e6));
        e.x = x;
        e.y = y;
        e.p = static_cast<std::uint8_t>(rng() & 1);
        out.push_back(e);
    }
}

// Moving-blob burst for one pixel, generated by thinning: candidates
// arrive at the pixel's peak rate and are kept with probability
// g(t)/g_max, where g is the Gaussian blob around the oscillating
// center.  norm rescales so the ROI-average added rate matches the
// configured multiplier.
inline void blob_pixel(std::vector<Event>& out, std::mt19937_64& rng, double base_rate,
                       double norm, const BoundingBox& roi, const ActionSpec& act,
                       double sigma, double amp, std::uint16_t x, std::uint16_t y) {
    const double cx = roi.x + (roi.w - 1) / 2.0;
    const double cy = roi.y + (roi.h - 1) / 2.0;
    const double dy = static_cast<double>(y) - cy;
    const double dx = std::abs(static_cast<double>(x) - cx);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double nearest = std::max(0.0, dx - amp);  // closest approach of the center
    const double g_max = std::exp(-(nearest * nearest + dy * dy) * inv2s2);
    const double peak = base_rate * norm * g_max;
    if (peak <= 1e-12) return;
    const double omega = 2.0 * 3.141592653589793 * act.osc_freq_hz;
    double t = act.t_start;
    for (;;) {
        t += exp_interval(rng, peak);
        if (t >= act.t_end) break;
        const double bx = cx + amp * std::sin(omega * (t - act.t_start));
        const double ddx = static_cast<double>(x) - bx;
        const double g = std::exp(-(ddx * ddx + dy * dy) * inv2s2);
        if (uniform01(rng) * g_max <= g) {
            Event e;
            e.t = static_cast<std::int64_t>(std::llround(t * 1e6));
            e.x = x;
            e.y = y;
            e.p = static_cast<std::uint8_t>(rng() & 1);
            out.push_back(e);
        }
    }
}

// Time-averaged ROI sum of the blob profile, used to normalize the
// thinned process so its ROI-average rate equals the uniform pattern's.
// The profile is separable, so the sum factors into x and y parts.
inline double blob_mean_profile(const BoundingBox& roi, const ActionSpec& act,
                                double sigma, double amp) {
    const double cx = roi.x + (roi.w - 1) / 2.0;
    const double cy = roi.y + (roi.h - 1) / 2.0;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double sum_y = 0.0;
    for (int y = roi.y; y < roi.y + roi.h; ++y) {
        const double dy = y - cy;
        sum_y += std::exp(-dy * dy * inv2s2);
    }
    const double omega = 2.0 * 3.141592653589793 * act.osc_freq_hz;
    const int kSamples = 1024;
    double sum_xt = 0.0;
    for (int k = 0; k < kSamples; ++k) {
        const double t = (k + 0.5) * (act.t_end - act.t_start) / kSamples;
        const double bx = cx + amp * std::sin(omega * t);
        for (int x = roi.x; x < roi.x + roi.w; ++x) {
            const double dx = x - bx;
            sum_xt += std::exp(-dx * dx * inv2s2);
        }
    }
    const double n_pixels = static_cast<double>(roi.w) * static_cast<double>(roi.h);
    return (sum_xt / kSamples) * sum_y / n_pixels;  // mean of g over roi pixels and time
}

}  // namespace detail

inline Scene generate_scene(const SceneConfig& cfg) {
    validate_scene(cfg);
    Scene scene;
    EventStream& s = scene.stream;
    s.width = cfg.width;
    s.height = cfg.height;
    s.t_begin = 0;
    s.t_end = static_cast<std::int64_t>(std::llround(cfg.duration * 1e6));

    if (cfg.background_rate > 0.0) {
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x) {
                const std::uint64_t px =
                    static_cast<std::uint64_t>(y) * cfg.width + x;
                auto rng = substream(cfg.seed, detail::kRoleBackground, px);
                detail::poisson_pixel(s.events, rng, cfg.background_rate, 0.0,
                                      cfg.duration, static_cast<std::uint16_t>(x),
                                      static_cast<std::uint16_t>(y));
            }
    }

    const std::uint64_t n_pixels = s.pixel_count();
    for (std::size_t ai = 0; ai < cfg.actions.size(); ++ai) {
        const ActionSpec& act = cfg.actions[ai];
        const BoundingBox* roi = nullptr;
        for (const auto& r : cfg.rois)
            if (r.roi_id == act.roi_id) roi = &r;
        const double added = cfg.background_rate * act.multiplier;
        if (added <= 0.0) continue;  // zero background implies zero burst rate

        double sigma = 0.0, amp = 0.0, norm = 1.0;
        if (act.pattern == ActionPattern::oscillating_blob) {
            sigma = std::max(1.0, std::min(roi->w, roi->h) / 4.0);
            amp = roi->w / 4.0;
            norm = 1.0 / detail::blob_mean_profile(*roi, act, sigma, amp);
        }
        for (int y = roi->y; y < roi->y + roi->h; ++y)
            for (int x = roi->x; x < roi->x + roi->w; ++x) {
                const std::uint64_t px =
                    static_cast<std::uint64_t>(y) * cfg.width + x;
                auto rng = substream(cfg.seed, detail::kRoleAction,
                                     ai * n_pixels + px);
                if (act.pattern == ActionPattern::uniform)
                    detail::poisson_pixel(s.events, rng, added, act.t_start,
                                          act.t_end, static_cast<std::uint16_t>(x),
                                          static_cast<std::uint16_t>(y));
                else
                    detail::blob_pixel(s.events, rng, added, norm, *roi, act, sigma,
                                       amp, static_cast<std::uint16_t>(x),
                                       static_cast<std::uint16_t>(y));
            }
    }

    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    validate_stream(s);

    scene.annotations.rois = cfg.rois;
    for (const auto& act : cfg.actions) {
        AnnotationInstance inst;
        inst.roi_id = act.roi_id;
        inst.t_start_us = static_cast<std::int64_t>(std::llround(act.t_start * 1e6));
        inst.t_end_us = static_cast<std::int64_t>(std::llround(act.t_end * 1e6));
        inst.label = "ED";
        scene.annotations.instances.push_back(std::move(inst));
    }
    validate_annotations(scene.annotations);
    return scene;
}

// Superimposes n distinct pixels firing as Poisson at the given rate
// across the whole recording; adversarial input for the cleanup filters.
inline EventStream add_hot_pixels(const EventStream& s, std::size_t n, double rate,
                                  std::uint64_t seed) {
    if (n == 0) return s;
    if (rate <= 0.0)
        throw std::invalid_argument("add_hot_pixels: rate must be positive");
    auto pick = substream(seed, detail::kRoleHotSelect);
    const std::vector<std::size_t> chosen = sample_indices(s.pixel_count(), n, pick);
    EventStream out = s;
    const double t0 = static_cast<double>(s.t_begin) * 1e-6;
    const double t1 = static_cast<double>(s.t_end) * 1e-6;
    for (std::size_t px : chosen) {
        auto rng = substream(seed, detail::kRoleHotEvents, px);
        detail::poisson_pixel(out.events, rng, rate, t0, t1,
                              static_cast<std::uint16_t>(px % s.width),
                              static_cast<std::uint16_t>(px / s.width));
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

// --- scene config file (JSON) ---

inline SceneConfig parse_scene_config(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("scene config: ") + e.what());
    }
    SceneConfig cfg;
    // Missing keys and wrong types surface as json exceptions; keep the
    // caller-facing contract (schema violation -> invalid_argument).
    try {
        cfg.width = j.at("width").get<int>();
        cfg.height = j.at("height").get<int>();
        cfg.duration = j.at("duration").get<double>();
        cfg.background_rate = j.at("background_rate").get<double>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& r : j.at("rois")) {
            BoundingBox b;
            b.roi_id = r.at("id").get<std::string>();
            b.x = r.at("x").get<int>();
            b.y = r.at("y").get<int>();
            b.w = r.at("w").get<int>();
            b.h = r.at("h").get<int>();
            cfg.rois.push_back(std::move(b));
        }
        if (j.contains("actions"))
            for (const auto& a : j.at("actions")) {
                ActionSpec act;
                act.roi_id = a.at("roi_id").get<std::string>();
                act.t_start = a.at("t_start").get<double>();
                act.t_end = a.at("t_end").get<double>();
                act.multiplier = a.at("multiplier").get<double>();
                if (a.contains("pattern"))
                    act.pattern = pattern_from_name(a.at("pattern").get<std::string>());
                if (a.contains("osc_freq_hz"))
                    act.osc_freq_hz = a.at("osc_freq_hz").get<double>();
                cfg.actions.push_back(std::move(act));
            }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("scene config: ") + e.what());
    }
    validate_scene(cfg);
    return cfg;
}

inline void write_scene_config(std::ostream& out, const SceneConfig& cfg) {
    nlohmann::json j;
    j["width"] = cfg.width;
    j["height"] = cfg.height;
    j["duration"] = cfg.duration;
    j["background_rate"] = cfg.background_rate;
    j["seed"] = cfg.seed;
    j["rois"] = nlohmann::json::array();
    for (const auto& r : cfg.rois)
        j["rois"].push_back({{"id", r.roi_id}, {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    j["actions"] = nlohmann::json::array();
    for (const auto& a : cfg.actions)
        j["actions"].push_back({{"roi_id", a.roi_id},
                                {"t_start", a.t_start},
                                {"t_end", a.t_end},
                                {"multiplier", a.multiplier},
                                {"pattern", pattern_name(a.pattern)},
                                {"osc_freq_hz", a.osc_freq_hz}});
    out << j.dump(2) << "\n";
}

inline SceneConfig load_scene_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene config: " + path);
    return parse_scene_config(in);
}

inline void save_scene_config(const std::string& path, const SceneConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scene config: " + path);
    write_scene_config(out, cfg);
}

}  // namespace evtad
