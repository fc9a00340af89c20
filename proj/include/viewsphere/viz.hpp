#pragma once

// Equirectangular hexagon heatmaps of per-cell values with optional gold
// ring, search-trace and local-maximum overlays. Output is SVG text whose
// bytes depend only on the inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "viewsphere/camera.hpp"
#include "viewsphere/goldeval.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/scorer.hpp"
#include "viewsphere/search.hpp"

namespace viewsphere {

struct Rgb {
    int r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

inline Rgb parse_color(std::string_view hex) {
    if (hex.size() != 7 || hex[0] != '#' ||
        hex.find_first_not_of("0123456789abcdefABCDEF", 1) != std::string_view::npos) {
        throw std::invalid_argument("colors must be written #rrggbb, got '" + std::string(hex) + "'");
    }
    auto byte = [&](std::size_t i) { return std::stoi(std::string(hex.substr(i, 2)), nullptr, 16); };
    return {byte(1), byte(3), byte(5)};
}

inline std::string color_hex(const Rgb& c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

struct HexMapStyle {
    double width = 1200.0;
    double height = 600.0;
    double margin = 24.0;
    double glyph_radius = 0.0;  ///< 0: derived from the cell spacing
    Rgb low{0x2c, 0x3e, 0x91};
    Rgb high{0xfd, 0xe7, 0x25};
    Rgb background{0xee, 0xee, 0xee};
    bool gold_rings = true;
    bool trace_path = true;
    bool local_maxima = false;
    std::string title;

    void validate() const {
        if (low == high) throw std::invalid_argument("color ramp endpoints must differ");
        if (!(width > 0) || !(height > 0) || margin < 0 || glyph_radius < 0) {
            throw std::invalid_argument("hexmap dimensions must be positive");
        }
    }
};

struct HexMapInput {
    std::span<const double> values;
    std::optional<CellId> gold;
    std::vector<char> background;  ///< per cell, drawn with the background color when set
    const SearchTrace* trace = nullptr;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    return s == "-0.00" ? "0.00" : s;
}

inline Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    auto ch = [t](int x, int y) { return static_cast<int>(std::lround(x + (y - x) * t)); };
    return {ch(a.r, b.r), ch(a.g, b.g), ch(a.b, b.b)};
}

inline std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

inline std::string render_hexmap(const PolySphere& sphere, const HexMapInput& in, const HexMapStyle& style = {}) {
    style.validate();
    if (in.values.size() != sphere.size()) {
        throw std::invalid_argument("map has " + std::to_string(in.values.size()) + " values, sphere has " +
                                    std::to_string(sphere.size()) + " cells");
    }
    if (!in.background.empty() && in.background.size() != sphere.size()) {
        throw std::invalid_argument("background mask does not match the sphere");
    }
    if (in.gold && !sphere.contains(*in.gold)) {
        throw std::invalid_argument("gold cell out of range");
    }
    for (double v : in.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("map values must be finite");
    }

    const double lo = *std::min_element(in.values.begin(), in.values.end());
    const double hi = *std::max_element(in.values.begin(), in.values.end());
    const double W = style.width, H = style.height, m = style.margin;
    const double top = style.title.empty() ? m : m + 20.0;
    const double radius = style.glyph_radius > 0.0
                              ? style.glyph_radius
                              : 0.5 * std::min(W / std::sqrt(2.0 * static_cast<double>(sphere.size())),
                                               H / std::sqrt(0.5 * static_cast<double>(sphere.size())));
    auto place = [&](CellId c) {
        const auto [theta, phi] = spherical_angles(sphere.center(c));
        return std::array<double, 2>{m + phi / kTwoPi * W, top + theta / kPi * H};
    };
    auto hexagon = [&](const std::array<double, 2>& p) {
        std::string pts;
        for (int k = 0; k < 6; ++k) {
            const double a = kPi / 6.0 + k * kPi / 3.0;
            if (k) pts += ' ';
            pts += detail::num(p[0] + radius * std::cos(a)) + "," + detail::num(p[1] + radius * std::sin(a));
        }
        return pts;
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W + 2 * m) + "\" height=\"" +
           detail::num(H + top + m) + "\" viewBox=\"0 0 " + detail::num(W + 2 * m) + " " + detail::num(H + top + m) +
           "\">\n";
    out += "<style>.cell{stroke:#ffffff;stroke-width:0.5}.ring{fill:none;stroke:#000000;stroke-width:1.5}"
           ".trace{fill:none;stroke:#d62728;stroke-width:1.5}.step{font:8px sans-serif;fill:#d62728}"
           ".maximum{fill:none;stroke:#ffffff;stroke-width:1.5}.title{font:14px sans-serif}</style>\n";
    if (!style.title.empty()) {
        out += "<text class=\"title\" x=\"" + detail::num(m) + "\" y=\"" + detail::num(m + 8.0) + "\">" +
               detail::escape_xml(style.title) + "</text>\n";
    }
    out += "<g id=\"cells\">\n";
    for (CellId c = 0; c < sphere.size(); ++c) {
        const bool bg = !in.background.empty() && in.background[c];
        const double t = hi > lo ? (in.values[c] - lo) / (hi - lo) : 0.5;
        const Rgb col = bg ? style.background : detail::lerp(style.low, style.high, t);
        out += "<polygon class=\"cell" + std::string(bg ? " bg" : "") + "\" data-cell=\"" + std::to_string(c) +
               "\" points=\"" + hexagon(place(c)) + "\" fill=\"" + color_hex(col) + "\"/>\n";
    }
    out += "</g>\n";

    if (style.gold_rings && in.gold) {
        out += "<g id=\"gold-rings\">\n";
        for (int k = 0; k <= 2; ++k) {
            for (CellId c : sphere.ring(*in.gold, k)) {
                out += "<polygon class=\"ring ring-" + std::to_string(k) + "\" points=\"" + hexagon(place(c)) + "\"/>\n";
            }
        }
        out += "</g>\n";
    }
    if (style.local_maxima) {
        out += "<g id=\"maxima\">\n";
        for (CellId c : local_maxima(sphere, in.values)) {
            const auto p = place(c);
            out += "<circle class=\"maximum\" cx=\"" + detail::num(p[0]) + "\" cy=\"" + detail::num(p[1]) + "\" r=\"" +
                   detail::num(radius * 0.6) + "\"/>\n";
        }
        out += "</g>\n";
    }
    if (style.trace_path && in.trace && !in.trace->entries.empty()) {
        out += "<g id=\"trace\">\n";
        std::string pts;
        double prev_x = 0.0;
        bool first = true;
        auto flush = [&] {
            if (!pts.empty()) out += "<polyline class=\"trace\" points=\"" + pts + "\"/>\n";
            pts.clear();
        };
        for (const auto& e : in.trace->entries) {
            if (!sphere.contains(e.cell)) throw std::invalid_argument("trace visits a cell outside the sphere");
            const auto p = place(e.cell);
            // break the path where it wraps around the azimuth seam
            if (!first && std::abs(p[0] - prev_x) > 0.5 * W) flush();
            if (!pts.empty()) pts += ' ';
            pts += detail::num(p[0]) + "," + detail::num(p[1]);
            prev_x = p[0];
            first = false;
        }
        flush();
        for (const auto& e : in.trace->entries) {
            const auto p = place(e.cell);
            out += "<text class=\"step\" x=\"" + detail::num(p[0] + 2.0) + "\" y=\"" + detail::num(p[1] - 2.0) + "\">" +
                   std::to_string(e.call) + "</text>\n";
        }
        out += "</g>\n";
    }
    out += "</svg>\n";
    return out;
}

inline std::string render_hexmap(const PolySphere& sphere, const ScoreMap& map, const HexMapStyle& style = {},
                                 std::optional<CellId> gold = std::nullopt, const SearchTrace* trace = nullptr) {
    if (map.sphere_checksum != sphere.checksum()) {
        throw std::invalid_argument("score map was computed on a different sphere");
    }
    return render_hexmap(sphere, HexMapInput{map.scores, gold, {}, trace}, style);
}

/// Cells outside the gold support are drawn as background.
inline std::string render_hexmap(const PolySphere& sphere, const GoldDistribution& gold, const HexMapStyle& style = {},
                                 const SearchTrace* trace = nullptr) {
    std::vector<char> bg(gold.weights.size());
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = gold.weights[i] > 0.0 ? 0 : 1;
    return render_hexmap(sphere, HexMapInput{gold.weights, gold.gold, std::move(bg), trace}, style);
}

}  // namespace viewsphere
