#pragma once

#include <string>
#include <vector>

#include "pmnc/evaluation.hpp"

namespace pmnc {

struct Rgb {
    unsigned char r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// Minimal RGB raster with a built-in 5x7 bitmap font, saved as PNG.
struct Canvas {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels; // 3 bytes per pixel, row-major

    Canvas(int w, int h, Rgb fill = {255, 255, 255});

    void set(int x, int y, Rgb c);
    Rgb get(int x, int y) const;
    void line(int x0, int y0, int x1, int y1, Rgb c);
    void fill_rect(int x, int y, int w, int h, Rgb c);
    /// Uppercase-folded 5x7 glyphs, 6 px advance; unknown glyphs skipped.
    void text(int x, int y, const std::string& s, Rgb c);
    static int text_width(const std::string& s) { return 6 * static_cast<int>(s.size()); }

    void save_png(const std::string& path) const;
    static Canvas load_png(const std::string& path);
};

/// One polyline on a chart; x and y must have equal length.
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Line chart with axes, ticks and a legend; all series share the axes.
void render_line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::string& path, int width = 900, int height = 560);

/// Symmetric diverging colormap: saturated blue at -max_abs, neutral white
/// at zero, saturated red at +max_abs (overestimation). Clamps outside.
Rgb diverging_color(double value, double max_abs);

/// Bias map rendered with the diverging colormap (nearest-neighbor upscale
/// by `scale`), plus a labeled colorbar. The color range is symmetric about
/// zero at the map's absolute maximum.
void render_bias_map(const BiasMap& map, const std::string& title, const std::string& path,
                     int scale = 3);

} // namespace pmnc
