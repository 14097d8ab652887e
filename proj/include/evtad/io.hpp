#pragma once

// File formats.
//
// Event CSV: optional '#'-prefixed metadata lines (key=value pairs:
// width, height, t_begin, t_end), a required header "t_us,x,y,p",
// then one event per line.  Metadata must precede the data so that
// coordinates can be validated as they are read.
//
// Annotations / detections are JSON documents; timestamps are integer
// microseconds so that write -> parse is an exact round trip.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "evtad/events.hpp"
#include "evtad/intervals.hpp"

namespace evtad {

struct EventCsvOptions {
    // Sensor dimensions; when positive they override file metadata.
    int width = 0;
    int height = 0;
};

namespace detail {

inline bool parse_meta_int(const std::string& line, const char* key, std::int64_t& out) {
    const std::string needle = std::string(key) + "=";
    const std::size_t pos = line.find(needle);
    if (pos == std::string::npos) return false;
    const char* first = line.data() + pos + needle.size();
    const char* last = line.data() + line.size();
    std::int64_t v = 0;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc()) return false;
    out = v;
    return true;
}

[[noreturn]] inline void csv_error(std::size_t line_no, const std::string& what) {
    throw std::invalid_argument("event csv: line " + std::to_string(line_no) + ": " + what);
}

}  // namespace detail

inline EventStream parse_event_csv(std::istream& in, const EventCsvOptions& opt = {}) {
    std::string text;
    {
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }

    EventStream s;
    s.width = opt.width;
    s.height = opt.height;
    bool have_meta_extent = false;
    std::int64_t meta_begin = 0, meta_end = 0;
    bool saw_header = false;
    bool saw_data = false;
    bool sorted = true;
    std::int64_t prev_t = 0;

    const char* p = text.data();
    const char* end = text.data() + text.size();
    std::size_t line_no = 0;
    while (p < end) {
        ++line_no;
        const char* eol = static_cast<const char*>(memchr(p, '\n', end - p));
        const char* line_end = eol ? eol : end;
        if (line_end > p && line_end[-1] == '\r') --line_end;

        if (p == line_end) {  // blank line
            p = eol ? eol + 1 : end;
            continue;
        }
        if (*p == '#') {
            const std::string line(p, line_end);
            if (saw_data)
                detail::csv_error(line_no, "metadata after data rows");
            std::int64_t v = 0;
            if (detail::parse_meta_int(line, "width", v) && s.width <= 0)
                s.width = static_cast<int>(v);
            if (detail::parse_meta_int(line, "height", v) && s.height <= 0)
                s.height = static_cast<int>(v);
            if (detail::parse_meta_int(line, "t_begin", v)) {
                meta_begin = v;
                have_meta_extent = true;
            }
            if (detail::parse_meta_int(line, "t_end", v)) meta_end = v;
            p = eol ? eol + 1 : end;
            continue;
        }
        if (!saw_header) {
            if (std::string(p, line_end) != "t_us,x,y,p")
                detail::csv_error(line_no, "expected header 't_us,x,y,p'");
            saw_header = true;
            p = eol ? eol + 1 : end;
            continue;
        }

        if (s.width <= 0 || s.height <= 0)
            detail::csv_error(line_no,
                              "sensor dimensions unknown (no metadata line and no flags)");
        saw_data = true;

        Event e;
        const char* q = p;
        auto field = [&](auto& value, bool last_field) {
            auto res = std::from_chars(q, line_end, value);
            if (res.ec != std::errc())
                detail::csv_error(line_no, "malformed field");
            q = res.ptr;
            if (!last_field) {
                if (q >= line_end || *q != ',')
                    detail::csv_error(line_no, "expected ','");
                ++q;
            } else if (q != line_end) {
                detail::csv_error(line_no, "trailing characters");
            }
        };
        std::int64_t t = 0;
        unsigned x = 0, y = 0, pol = 0;
        field(t, false);
        field(x, false);
        field(y, false);
        field(pol, true);
        if (t < 0) detail::csv_error(line_no, "negative timestamp");
        if (static_cast<int>(x) >= s.width || static_cast<int>(y) >= s.height)
            detail::csv_error(line_no, "coordinate outside sensor " +
                                           std::to_string(s.width) + "x" +
                                           std::to_string(s.height));
        if (pol > 1) detail::csv_error(line_no, "polarity must be 0 or 1");
        e.t = t;
        e.x = static_cast<std::uint16_t>(x);
        e.y = static_cast<std::uint16_t>(y);
        e.p = static_cast<std::uint8_t>(pol);
        if (!s.events.empty() && t < prev_t) sorted = false;
        prev_t = t;
        s.events.push_back(e);
        p = eol ? eol + 1 : end;
    }

    if (!saw_header)
        throw std::invalid_argument("event csv: missing header 't_us,x,y,p'");
    if (s.width <= 0 || s.height <= 0)
        throw std::invalid_argument(
            "event csv: sensor dimensions unknown (no metadata line and no flags)");
    if (!sorted)
        std::stable_sort(s.events.begin(), s.events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    if (have_meta_extent) {
        s.t_begin = meta_begin;
        s.t_end = meta_end;
    } else if (!s.events.empty()) {
        s.t_begin = s.events.front().t;
        s.t_end = s.events.back().t;
    }
    validate_stream(s);
    return s;
}

inline void write_event_csv(std::ostream& out, const EventStream& s) {
    out << "# width=" << s.width << " height=" << s.height << " t_begin=" << s.t_begin
        << " t_end=" << s.t_end << "\n";
    out << "t_us,x,y,p\n";
    char buf[64];
    // Numeric fields stop 8 bytes short of the end so the four one-byte
    // separators below can never run past the buffer.
    char* const num_end = buf + sizeof buf - 8;
    for (const Event& e : s.events) {
        char* q = buf;
        auto put = [&](auto v) { q = std::to_chars(q, num_end, v).ptr; };
        put(e.t);
        *q++ = ',';
        put(static_cast<unsigned>(e.x));
        *q++ = ',';
        put(static_cast<unsigned>(e.y));
        *q++ = ',';
        put(static_cast<unsigned>(e.p));
        *q++ = '\n';
        out.write(buf, q - buf);
    }
}

inline EventStream load_event_csv(const std::string& path, const EventCsvOptions& opt = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open event file: " + path);
    return parse_event_csv(in, opt);
}

inline void save_event_csv(const std::string& path, const EventStream& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write event file: " + path);
    write_event_csv(out, s);
}

// --- annotations ---

inline AnnotationSet parse_annotations(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("annotations: ") + e.what());
    }
    AnnotationSet a;
    if (!j.is_object() || !j.contains("rois") || !j.contains("instances"))
        throw std::invalid_argument("annotations: expected object with 'rois' and 'instances'");
    // Missing keys and wrong types surface as json exceptions; keep the
    // caller-facing contract (schema violation -> invalid_argument).
    try {
        for (const auto& r : j.at("rois")) {
            BoundingBox b;
            b.roi_id = r.at("id").get<std::string>();
            b.x = r.at("x").get<int>();
            b.y = r.at("y").get<int>();
            b.w = r.at("w").get<int>();
            b.h = r.at("h").get<int>();
            a.rois.push_back(std::move(b));
        }
        for (const auto& i : j.at("instances")) {
            AnnotationInstance inst;
            inst.roi_id = i.at("roi_id").get<std::string>();
            inst.t_start_us = i.at("t_start_us").get<std::int64_t>();
            inst.t_end_us = i.at("t_end_us").get<std::int64_t>();
            inst.label = i.at("label").get<std::string>();
            a.instances.push_back(std::move(inst));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("annotations: ") + e.what());
    }
    validate_annotations(a);
    return a;
}

inline void write_annotations(std::ostream& out, const AnnotationSet& a) {
    nlohmann::json j;
    j["rois"] = nlohmann::json::array();
    for (const auto& r : a.rois)
        j["rois"].push_back({{"id", r.roi_id}, {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    j["instances"] = nlohmann::json::array();
    for (const auto& i : a.instances)
        j["instances"].push_back({{"roi_id", i.roi_id},
                                  {"t_start_us", i.t_start_us},
                                  {"t_end_us", i.t_end_us},
                                  {"label", i.label}});
    out << j.dump(2) << "\n";
}

inline AnnotationSet load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open annotation file: " + path);
    return parse_annotations(in);
}

inline void save_annotations(const std::string& path, const AnnotationSet& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write annotation file: " + path);
    write_annotations(out, a);
}

// --- detections / proposals ---

inline std::int64_t to_us(double t_sec) {
    return static_cast<std::int64_t>(std::llround(t_sec * 1e6));
}

// Detections and interval proposals share one schema; proposals simply
// omit the label.
inline std::vector<Detection> parse_detections(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("detections: ") + e.what());
    }
    if (!j.is_array())
        throw std::invalid_argument("detections: expected a JSON array");
    std::vector<Detection> out;
    try {
        for (const auto& d : j) {
            Detection det;
            det.roi_id = d.at("roi_id").get<std::string>();
            const auto t0 = d.at("t_start_us").get<std::int64_t>();
            const auto t1 = d.at("t_end_us").get<std::int64_t>();
            if (t1 <= t0)
                throw std::invalid_argument("detections: non-positive duration in roi '" +
                                            det.roi_id + "'");
            det.interval = Interval{static_cast<double>(t0) * 1e-6,
                                    static_cast<double>(t1) * 1e-6};
            det.score = d.at("score").get<double>();
            if (det.score < 0.0 || det.score > 1.0)
                throw std::invalid_argument("detections: score outside [0, 1]");
            det.label = d.contains("label") ? d.at("label").get<std::string>() : std::string();
            out.push_back(std::move(det));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("detections: ") + e.what());
    }
    return out;
}

inline void write_detections(std::ostream& out, const std::vector<Detection>& dets,
                             bool with_label = true) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& d : dets) {
        nlohmann::json e = {{"roi_id", d.roi_id},
                            {"t_start_us", to_us(d.interval.t_start)},
                            {"t_end_us", to_us(d.interval.t_end)},
                            {"score", d.score}};
        if (with_label) e["label"] = d.label;
        j.push_back(std::move(e));
    }
    out << j.dump(2) << "\n";
}

inline std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open detection file: " + path);
    return parse_detections(in);
}

inline void save_detections(const std::string& path, const std::vector<Detection>& dets,
                            bool with_label = true) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write detection file: " + path);
    write_detections(out, dets, with_label);
}

}  // namespace evtad
