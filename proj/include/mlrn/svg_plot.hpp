#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mlrn/error.hpp"

namespace mlrn {

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline MetricsTable read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics '" + path + "'");
    MetricsTable t;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("metrics file '" + path + "' is empty");
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) t.columns.push_back(cell);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::vector<double> values;
        while (std::getline(row, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (...) {
                throw ParseError("metrics line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (values.size() != t.columns.size())
            throw ParseError("metrics line " + std::to_string(lineno) + ": wrong column count");
        t.rows.push_back(std::move(values));
    }
    if (t.rows.empty()) throw ParseError("metrics file '" + path + "' has no data rows");
    return t;
}

// Loss/accuracy curves as one polyline per metric column, epoch on the x
// axis, each metric normalized to its own range.
inline std::string metrics_to_svg(const MetricsTable& t) {
    const int width = 720, height = 420, margin = 50;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";

    std::size_t epoch_col = 0;
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        if (t.columns[c] == "epoch") epoch_col = c;
    double e_lo = t.rows.front()[epoch_col], e_hi = t.rows.back()[epoch_col];
    if (e_hi <= e_lo) e_hi = e_lo + 1;

    int color_idx = 0;
    int legend_y = margin;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        if (c == epoch_col || t.columns[c] == "wall_seconds") continue;
        double lo = t.rows[0][c], hi = t.rows[0][c];
        for (const auto& r : t.rows) {
            lo = std::min(lo, r[c]);
            hi = std::max(hi, r[c]);
        }
        if (hi <= lo) hi = lo + 1;
        const char* color = colors[color_idx % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& r : t.rows) {
            const double x =
                margin + (r[epoch_col] - e_lo) / (e_hi - e_lo) * (width - 2.0 * margin);
            const double y =
                height - margin - (r[c] - lo) / (hi - lo) * (height - 2.0 * margin);
            svg << x << "," << y << " ";
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << margin + 8 << "\" y=\"" << legend_y << "\" fill=\"" << color
            << "\" font-size=\"11\">" << t.columns[c] << "</text>\n";
        legend_y += 14;
        ++color_idx;
    }
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace mlrn
