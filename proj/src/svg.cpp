#include "downgen/svg.hpp"

#include "downgen/error.hpp"
#include "downgen/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace downgen {

namespace {

// Piecewise-linear approximation of the viridis colour map.
std::string colour(double u) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {68, 1, 84},
        {59, 82, 139},
        {33, 145, 140},
        {94, 201, 98},
        {253, 231, 37},
    }};
    u = std::clamp(u, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
    const auto k = std::min(static_cast<std::size_t>(u), stops.size() - 2);
    const double f = u - static_cast<double>(k);
    char buf[8];
    const auto c = [&](std::size_t ch) {
        return static_cast<int>(std::lround(stops[k][ch] + f * (stops[k + 1][ch] - stops[k][ch])));
    };
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c(0), c(1), c(2));
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (const char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

std::string heatmap_svg(const std::string& title, const std::vector<HeatmapPanel>& panels, std::size_t nx,
                        std::size_t ny) {
    if (panels.empty() || nx == 0 || ny == 0) {
        throw ValidationError("heatmap_svg: nothing to draw");
    }
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& [name, values] : panels) {
        if (values.size() != nx * ny) {
            throw ShapeError("heatmap_svg: panel " + name + " does not have nx * ny values");
        }
        for (const double v : values) {
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!(lo <= hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    const double span = hi > lo ? hi - lo : 1.0;
    const double cell = std::max(4.0, 240.0 / static_cast<double>(std::max(nx, ny)));
    const double pw = cell * static_cast<double>(nx);
    const double ph = cell * static_cast<double>(ny);
    const double gap = 20.0;
    const double top = 50.0;
    const double width = gap + static_cast<double>(panels.size()) * (pw + gap);
    const double height = top + ph + 40.0;

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << gap << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title)
      << "</text>\n";
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto& [name, values] = panels[p];
        const double x0 = gap + static_cast<double>(p) * (pw + gap);
        o << "<text x=\"" << x0 << "\" y=\"" << top - 6 << "\" font-family=\"sans-serif\" font-size=\"12\">"
          << escape(name) << "</text>\n";
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const double v = values[i * ny + j];
                const std::string fill = std::isfinite(v) ? colour((v - lo) / span) : "#999999";
                o << "<rect x=\"" << x0 + cell * static_cast<double>(i) << "\" y=\""
                  << top + cell * static_cast<double>(ny - 1 - j) << "\" width=\"" << cell << "\" height=\"" << cell
                  << "\" fill=\"" << fill << "\"/>\n";
            }
        }
    }
    o << "<text x=\"" << gap << "\" y=\"" << top + ph + 24 << "\" font-family=\"sans-serif\" font-size=\"12\">range "
      << format_double(lo) << " .. " << format_double(hi) << "</text>\n";
    o << "</svg>\n";
    return o.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

}  // namespace downgen
