#pragma once

#include <string>
#include <utility>
#include <vector>

namespace werank::svg {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool dotted = false;
    int color_index = 0;
};

/// Deterministic line chart on a fixed 640x480 canvas: no timestamps, no
/// randomness, so identical inputs render byte-identical SVG.
std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series);

} // namespace werank::svg
