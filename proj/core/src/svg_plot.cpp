#include "werank/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace werank::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 32;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
                          "#8c6d31", "#843c39", "#7b4173", "#3182bd"};
constexpr int kPaletteSize = 16;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series) {
    if (series.empty()) throw std::invalid_argument("render_line_chart: no series");

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmin <= xmax)) throw std::invalid_argument("render_line_chart: empty series");
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto px = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return kMarginTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" << title << "</text>\n";

    // axes
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
        << "\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        out << "<text x=\"" << num(px(fx)) << "\" y=\"" << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << tick(fx)
            << "</text>\n";
        out << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << num(py(fy) + 3)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << tick(fy)
            << "</text>\n";
        out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << num(py(fy)) << "\" x2=\""
            << kWidth - kMarginRight << "\" y2=\"" << num(py(fy))
            << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    }
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 " << kHeight / 2 << ")\">" << y_label << "</text>\n";

    for (const auto& s : series) {
        if (s.points.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"" << kPalette[s.color_index % kPaletteSize]
            << "\" stroke-width=\"1.2\"";
        if (s.dotted) out << " stroke-dasharray=\"4 3\"";
        out << " points=\"";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            if (i) out << " ";
            out << num(px(s.points[i].first)) << "," << num(py(s.points[i].second));
        }
        out << "\"><title>" << s.label << "</title></polyline>\n";
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace werank::svg
