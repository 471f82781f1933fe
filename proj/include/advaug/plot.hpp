#pragma once

#include "advaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advaug {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y)
};

namespace detail {

inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

// Minimal line chart as a standalone SVG string. Axes with five ticks per
// side, one polyline per series, legend in the top-right corner.
inline std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
    if (series.empty()) throw std::invalid_argument("render_svg: no series");
    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const Series& s : series)
        for (const auto& [x, y] : s.points) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (x_min > x_max) throw std::invalid_argument("render_svg: no points");
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double w = 720, h = 480, ml = 64, mr = 24, mt = 40, mb = 48;
    const double pw = w - ml - mr, ph = h - mt - mb;
    const auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    const auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    const int n_colors = 6;

    std::string svg;
    char buf[256];
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
           "font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">%s</text>\n",
                  ml + pw / 2, title.c_str());
    svg += buf;

    for (int i = 0; i <= 4; ++i) {
        const double xv = x_min + (x_max - x_min) * i / 4.0;
        const double yv = y_min + (y_max - y_min) * i / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", px(xv), mt,
                      px(xv), mt + ph);
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", ml, py(yv),
                      ml + pw, py(yv));
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n", px(xv),
                      mt + ph + 16, detail::fmt_num(xv).c_str());
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n", ml - 6,
                      py(yv) + 4, detail::fmt_num(yv).c_str());
        svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"#333\"/>\n", ml,
                  mt, pw, ph);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"middle\">%s</text>\n", ml + pw / 2,
                  h - 10, x_label.c_str());
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"16\" y=\"%.0f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.0f)\">%s</text>\n",
                  mt + ph / 2, mt + ph / 2, y_label.c_str());
    svg += buf;

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = palette[i % n_colors];
        std::string pts;
        for (const auto& [x, y] : series[i].points) {
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(x), py(y));
            pts += buf;
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        const double ly = mt + 14 + 16.0 * static_cast<double>(i);
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      ml + pw - 120, ly - 4, ml + pw - 100, ly - 4, color);
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n", ml + pw - 94, ly,
                      series[i].label.c_str());
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

// Pull one curve per metrics log. "bleu" and "loss" read the validation
// block of records that carry one; "total" reads every step's total loss.
inline std::vector<Series> curves_from_metrics(const std::vector<std::string>& paths,
                                               const std::vector<std::string>& labels, const std::string& field) {
    if (field != "bleu" && field != "loss" && field != "total")
        throw std::invalid_argument("curves_from_metrics: field must be bleu, loss, or total");
    if (!labels.empty() && labels.size() != paths.size())
        throw std::invalid_argument("curves_from_metrics: label count must match path count");
    std::vector<Series> out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        Series s;
        s.label = labels.empty() ? paths[i] : labels[i];
        for (const nlohmann::json& rec : load_metrics(paths[i])) {
            const double t = rec.at("t").get<double>();
            if (field == "total") {
                s.points.emplace_back(t, rec.at("total").get<double>());
            } else if (rec.contains("val")) {
                s.points.emplace_back(t, rec.at("val").at(field).get<double>());
            }
        }
        if (s.points.empty()) throw std::runtime_error(paths[i] + ": no points for field '" + field + "'");
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_plot(const std::string& path, const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << render_svg(series, title, x_label, y_label);
}

}  // namespace advaug
