#include "pplx/svg_plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace pplx {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 70, kRight = 600, kTop = 46, kBottom = 424;

std::vector<Scalar> numeric_column(const CsvTable& table, const std::string& name) {
    const size_t col = table.column(name); // throws on missing
    std::vector<Scalar> out;
    out.reserve(table.rows.size());
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& cell = table.rows[r][col];
        Scalar v = 0;
        const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || end != cell.data() + cell.size()) {
            throw std::invalid_argument("plot: column '" + name + "' row " + std::to_string(r) +
                                        " is not numeric: '" + cell + "'");
        }
        out.push_back(v);
    }
    return out;
}

struct Axis {
    Scalar lo = 0, hi = 1;
    double px_lo = 0, px_hi = 1;

    static Axis fit(const std::vector<Scalar>& vals, double px_lo, double px_hi) {
        Axis ax;
        ax.px_lo = px_lo;
        ax.px_hi = px_hi;
        ax.lo = *std::min_element(vals.begin(), vals.end());
        ax.hi = *std::max_element(vals.begin(), vals.end());
        if (ax.lo == ax.hi) { // flat data still needs a finite span
            const Scalar pad = ax.lo == 0 ? 1.0 : std::abs(ax.lo) * 0.5;
            ax.lo -= pad;
            ax.hi += pad;
        } else {
            const Scalar pad = (ax.hi - ax.lo) * 0.05;
            ax.lo -= pad;
            ax.hi += pad;
        }
        return ax;
    }

    double px(Scalar v) const { return px_lo + (px_hi - px_lo) * ((v - lo) / (hi - lo)); }

    // round tick spacing of the 1/2/5 family covering the span with ~5 ticks
    std::vector<Scalar> ticks() const {
        const Scalar span = hi - lo;
        Scalar step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
        if (span / step > 8) step *= 2;
        if (span / step > 8) step *= 2.5;
        std::vector<Scalar> out;
        for (Scalar t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) {
            out.push_back(t == 0 ? 0.0 : t); // normalize -0
        }
        return out;
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

std::string fmt_tick(Scalar v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

// 5 anchors of the viridis ramp, linearly interpolated
std::string viridis(Scalar t) {
    static constexpr double stops[5][3] = {{0.267, 0.005, 0.329},
                                           {0.229, 0.322, 0.545},
                                           {0.128, 0.567, 0.551},
                                           {0.369, 0.789, 0.383},
                                           {0.993, 0.906, 0.144}};
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * 4;
    const int k = std::min(3, static_cast<int>(pos));
    const double f = pos - k;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  static_cast<int>(std::lround(255 * (stops[k][0] + f * (stops[k + 1][0] - stops[k][0])))),
                  static_cast<int>(std::lround(255 * (stops[k][1] + f * (stops[k + 1][1] - stops[k][1])))),
                  static_cast<int>(std::lround(255 * (stops[k][2] + f * (stops[k + 1][2] - stops[k][2])))));
    return std::string(buf);
}

std::string star_path(double cx, double cy, double r) {
    std::string d;
    for (int i = 0; i < 10; ++i) {
        const double rad = (i % 2 == 0) ? r : r * 0.45;
        const double ang = -M_PI / 2 + i * M_PI / 5;
        d += (i == 0 ? "M" : "L") + fmt(cx + rad * std::cos(ang)) + " " + fmt(cy + rad * std::sin(ang));
    }
    return d + "Z";
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

std::string render_plot(const CsvTable& table, const PlotOptions& opts) {
    if (opts.kind != "line" && opts.kind != "scatter") {
        throw std::invalid_argument("plot: kind must be 'line' or 'scatter', got '" + opts.kind + "'");
    }
    if (table.rows.empty()) throw std::invalid_argument("plot: table has no data rows");
    const std::vector<Scalar> xs = numeric_column(table, opts.x_col);
    const std::vector<Scalar> ys = numeric_column(table, opts.y_col);
    std::vector<Scalar> cs;
    if (!opts.color_col.empty()) cs = numeric_column(table, opts.color_col);
    if (opts.star_row && *opts.star_row >= table.rows.size()) {
        throw std::invalid_argument("plot: star_row " + std::to_string(*opts.star_row) + " out of range");
    }

    const Axis ax = Axis::fit(xs, kLeft, kRight);
    const Axis ay = Axis::fit(ys, kBottom, kTop);
    Scalar c_lo = 0, c_hi = 1;
    if (!cs.empty()) {
        c_lo = *std::min_element(cs.begin(), cs.end());
        c_hi = *std::max_element(cs.begin(), cs.end());
        if (c_lo == c_hi) c_hi = c_lo + 1;
    }

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
           fmt(kHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty()) {
        svg += "<text x=\"" + fmt((kLeft + kRight) / 2) +
               "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
               escape_xml(opts.title) + "</text>\n";
    }

    // frame and ticks
    svg += "<g stroke=\"black\" fill=\"none\">\n";
    svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kBottom) + "\" x2=\"" + fmt(kRight) +
           "\" y2=\"" + fmt(kBottom) + "\"/>\n";
    svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" +
           fmt(kBottom) + "\"/>\n";
    svg += "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (const Scalar t : ax.ticks()) {
        const double x = ax.px(t);
        svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(kBottom) + "\" x2=\"" + fmt(x) + "\" y2=\"" +
               fmt(kBottom + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(kBottom + 19) + "\" text-anchor=\"middle\">" +
               fmt_tick(t) + "</text>\n";
    }
    for (const Scalar t : ay.ticks()) {
        const double y = ay.px(t);
        svg += "<line x1=\"" + fmt(kLeft - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" +
               fmt(y) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" +
               fmt_tick(t) + "</text>\n";
    }
    svg += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"" + fmt(kHeight - 12) +
           "\" text-anchor=\"middle\">" + escape_xml(opts.x_col) + "</text>\n";
    svg += "<text x=\"18\" y=\"" + fmt((kTop + kBottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           fmt((kTop + kBottom) / 2) + ")\">" + escape_xml(opts.y_col) + "</text>\n";
    svg += "</g>\n";

    // data
    if (opts.kind == "line") {
        std::string pts;
        for (size_t i = 0; i < xs.size(); ++i) {
            if (i) pts += ' ';
            pts += fmt(ax.px(xs[i])) + "," + fmt(ay.px(ys[i]));
        }
        svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    } else {
        for (size_t i = 0; i < xs.size(); ++i) {
            const std::string fill = cs.empty() ? "#1f77b4" : viridis((cs[i] - c_lo) / (c_hi - c_lo));
            svg += "<circle cx=\"" + fmt(ax.px(xs[i])) + "\" cy=\"" + fmt(ay.px(ys[i])) +
                   "\" r=\"4\" fill=\"" + fill + "\"/>\n";
        }
    }
    if (opts.star_row) {
        svg += "<path d=\"" + star_path(ax.px(xs[*opts.star_row]), ay.px(ys[*opts.star_row]), 11) +
               "\" fill=\"gold\" stroke=\"black\"/>\n";
    }

    // legend
    double ly = kTop + 10;
    svg += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    if (opts.kind == "line") {
        svg += "<line x1=\"" + fmt(kRight + 14) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(kRight + 34) +
               "\" y2=\"" + fmt(ly) + "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    } else {
        svg += "<circle cx=\"" + fmt(kRight + 24) + "\" cy=\"" + fmt(ly) + "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    }
    svg += "<text x=\"" + fmt(kRight + 40) + "\" y=\"" + fmt(ly + 4) + "\">" + escape_xml(opts.y_col) +
           "</text>\n";
    ly += 24;
    if (!cs.empty()) {
        // vertical gradient swatch, dark = low
        const double bar_h = 90, bar_w = 12;
        for (int seg = 0; seg < 24; ++seg) {
            const double t0 = seg / 24.0;
            svg += "<rect x=\"" + fmt(kRight + 18) + "\" y=\"" + fmt(ly + bar_h * (1 - t0) - bar_h / 24) +
                   "\" width=\"" + fmt(bar_w) + "\" height=\"" + fmt(bar_h / 24 + 0.5) + "\" fill=\"" +
                   viridis(t0) + "\"/>\n";
        }
        svg += "<text x=\"" + fmt(kRight + 36) + "\" y=\"" + fmt(ly + bar_h) + "\">" + fmt_tick(c_lo) +
               "</text>\n";
        svg += "<text x=\"" + fmt(kRight + 36) + "\" y=\"" + fmt(ly + 8) + "\">" + fmt_tick(c_hi) +
               "</text>\n";
        svg += "<text x=\"" + fmt(kRight + 18) + "\" y=\"" + fmt(ly - 8) + "\">" + escape_xml(opts.color_col) +
               "</text>\n";
        ly += bar_h + 26;
    }
    if (opts.star_row) {
        svg += "<path d=\"" + star_path(kRight + 24, ly, 8) + "\" fill=\"gold\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(kRight + 40) + "\" y=\"" + fmt(ly + 4) + "\">row " +
               std::to_string(*opts.star_row) + "</text>\n";
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

void emit_plot(const std::string& csv_path, const PlotOptions& opts, const std::string& svg_path) {
    const std::string svg = render_plot(read_csv(csv_path), opts);
    std::ofstream f(svg_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("emit_plot: cannot open " + svg_path);
    f << svg;
    f.flush();
    if (!f) throw std::runtime_error("emit_plot: write failed for " + svg_path);
}

} // namespace pplx
