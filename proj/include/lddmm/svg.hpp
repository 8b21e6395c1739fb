#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "point_set.hpp"

// Minimal self-contained SVG line charts for misfit histories and landmark shapes.
namespace lddmm::svg {

inline std::string escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char ch : text) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += ch;
        }
    }
    return out;
}

inline const char *palette(std::size_t i) {
    static constexpr const char *colours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colours[i % (sizeof(colours) / sizeof(colours[0]))];
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string colour;  // empty: palette
    bool closed = false;
    bool markers = false;
};

struct Frame {
    double width = 640;
    double height = 440;
    double margin_left = 70;
    double margin_right = 150;
    double margin_top = 40;
    double margin_bottom = 50;
};

namespace detail {

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) { return; }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finalise() {
        if (!std::isfinite(lo)) { lo = 0.0, hi = 1.0; }
        if (hi - lo < 1e-12) { lo -= 0.5, hi += 0.5; }
    }
};

}  // namespace detail

/// Renders polylines with axes, five-interval ticks and a legend.
/// When equal_aspect is set both axes share one scale (for shapes).
inline std::string line_chart(const std::vector<Series> &series, std::string_view title, std::string_view x_label,
                              std::string_view y_label, bool equal_aspect = false, const Frame &frame = {}) {
    detail::Range xr;
    detail::Range yr;
    for (const auto &s : series) {
        for (double v : s.x) { xr.add(v); }
        for (double v : s.y) { yr.add(v); }
    }
    xr.finalise();
    yr.finalise();
    const double plot_w = frame.width - frame.margin_left - frame.margin_right;
    const double plot_h = frame.height - frame.margin_top - frame.margin_bottom;
    double sx = plot_w / (xr.hi - xr.lo);
    double sy = plot_h / (yr.hi - yr.lo);
    if (equal_aspect) { sx = sy = std::min(sx, sy); }
    const auto px = [&](double x) { return frame.margin_left + (x - xr.lo) * sx; };
    const auto py = [&](double y) { return frame.margin_top + plot_h - (y - yr.lo) * sy; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << frame.width << "\" height=\"" << frame.height
       << "\" viewBox=\"0 0 " << frame.width << ' ' << frame.height << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << frame.width << "\" height=\"" << frame.height << "\" fill=\"white\"/>\n"
       << "<text x=\"" << frame.width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"15\">" << escape(title) << "</text>\n";

    // axes and ticks
    const double x0 = frame.margin_left;
    const double y0 = frame.margin_top + plot_h;
    os << "<g stroke=\"black\" stroke-width=\"1\">\n"
       << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 + plot_w << "\" y2=\"" << y0 << "\"/>\n"
       << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << frame.margin_top << "\"/>\n"
       << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
    constexpr int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double xv = xr.lo + (xr.hi - xr.lo) * t / ticks;
        const double yv = yr.lo + (yr.hi - yr.lo) * t / ticks;
        os << "<text x=\"" << detail::num(px(xv)) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
           << detail::num(xv) << "</text>\n"
           << "<text x=\"" << x0 - 6 << "\" y=\"" << detail::num(py(yv) + 4) << "\" text-anchor=\"end\">"
           << detail::num(yv) << "</text>\n";
    }
    os << "<text x=\"" << x0 + plot_w / 2 << "\" y=\"" << frame.height - 10 << "\" text-anchor=\"middle\">"
       << escape(x_label) << "</text>\n"
       << "<text x=\"16\" y=\"" << frame.margin_top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << frame.margin_top + plot_h / 2 << ")\">" << escape(y_label) << "</text>\n</g>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto &ser = series[s];
        const std::string colour = ser.colour.empty() ? palette(s) : ser.colour;
        std::ostringstream pts;
        const std::size_t n = std::min(ser.x.size(), ser.y.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) { continue; }
            pts << detail::num(px(ser.x[i])) << ',' << detail::num(py(ser.y[i])) << ' ';
        }
        os << '<' << (ser.closed ? "polygon" : "polyline") << " fill=\"none\" stroke=\"" << colour
           << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        if (ser.markers) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) { continue; }
                os << "<circle cx=\"" << detail::num(px(ser.x[i])) << "\" cy=\"" << detail::num(py(ser.y[i]))
                   << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
            }
        }
        if (!ser.label.empty()) {
            const double ly = frame.margin_top + 14.0 * static_cast<double>(s) + 6;
            const double lx = frame.width - frame.margin_right + 12;
            os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 18 << "\" y2=\"" << ly
               << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
               << "<text x=\"" << lx + 22 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
               << escape(ser.label) << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

struct NamedTrace {
    std::string label;
    std::vector<double> values;
};

/// log10 E^k against k. Zero misfits are dropped from the polyline.
inline std::string log_misfit_plot(const std::vector<NamedTrace> &traces, std::string_view title) {
    std::vector<Series> series;
    series.reserve(traces.size());
    for (const auto &t : traces) {
        Series s;
        s.label = t.label;
        for (std::size_t k = 0; k < t.values.size(); ++k) {
            s.x.push_back(static_cast<double>(k));
            s.y.push_back(t.values[k] > 0.0 ? std::log10(t.values[k]) : std::numeric_limits<double>::quiet_NaN());
        }
        series.push_back(std::move(s));
    }
    return line_chart(series, title, "Kalman iteration k", "log10 E^k");
}

struct NamedShape {
    std::string label;
    LandmarkSet shape;
    std::string colour;
};

/// Closed polygons through the landmarks in order (linear interpolation between landmarks).
inline std::string shape_overlay(const std::vector<NamedShape> &shapes, std::string_view title) {
    std::vector<Series> series;
    for (const auto &sh : shapes) {
        Series s;
        s.label = sh.label;
        s.colour = sh.colour;
        s.closed = true;
        s.markers = true;
        for (Eigen::Index i = 0; i < sh.shape.size(); ++i) {
            s.x.push_back(sh.shape(0, i));
            s.y.push_back(sh.shape.dim() > 1 ? sh.shape(1, i) : 0.0);
        }
        series.push_back(std::move(s));
    }
    return line_chart(series, title, "x", "y", true);
}

}  // namespace lddmm::svg
