#pragma once

#include "pplx/manifest.hpp"

#include <optional>
#include <string>

namespace pplx {

// Deterministic standalone SVG: axes with rounded tick labels, a legend, one
// polyline (line kind) or one circle per row (scatter kind). `color_col`
// switches scatter fills to a 5-stop viridis ramp over that column's range,
// with a gradient swatch in the legend. `star_row` marks one data row with a
// gold star on top of everything else.
struct PlotOptions {
    std::string kind = "line"; // "line" | "scatter"
    std::string x_col;
    std::string y_col;
    std::string color_col;              // empty = single-color points
    std::optional<size_t> star_row;     // index into the table's data rows
    std::string title;
};

// Schema problems (unknown kind, missing/non-numeric column, empty table,
// star_row out of range) throw std::invalid_argument.
std::string render_plot(const CsvTable& table, const PlotOptions& opts);

void emit_plot(const std::string& csv_path, const PlotOptions& opts, const std::string& svg_path);

} // namespace pplx
