#include "pmnc/plots.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <png.h>

#include "pmnc/errors.hpp"

namespace pmnc {

namespace {

/// 5x7 glyphs, one byte per column, least-significant bit on top.
struct Glyph {
    char ch;
    unsigned char col[5];
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'!', {0x00, 0x00, 0x5F, 0x00, 0x00}},
    {'"', {0x00, 0x07, 0x00, 0x07, 0x00}}, {'#', {0x14, 0x7F, 0x14, 0x7F, 0x14}},
    {'%', {0x23, 0x13, 0x08, 0x64, 0x62}}, {'(', {0x00, 0x1C, 0x22, 0x41, 0x00}},
    {')', {0x00, 0x41, 0x22, 0x1C, 0x00}}, {'*', {0x08, 0x2A, 0x1C, 0x2A, 0x08}},
    {'+', {0x08, 0x08, 0x3E, 0x08, 0x08}}, {',', {0x00, 0x50, 0x30, 0x00, 0x00}},
    {'-', {0x08, 0x08, 0x08, 0x08, 0x08}}, {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
    {'/', {0x20, 0x10, 0x08, 0x04, 0x02}}, {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}},
    {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}}, {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
    {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}}, {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}},
    {'5', {0x27, 0x45, 0x45, 0x45, 0x39}}, {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}},
    {'7', {0x01, 0x71, 0x09, 0x05, 0x03}}, {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
    {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}}, {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
    {'<', {0x00, 0x08, 0x14, 0x22, 0x41}}, {'=', {0x14, 0x14, 0x14, 0x14, 0x14}},
    {'>', {0x41, 0x22, 0x14, 0x08, 0x00}}, {'?', {0x02, 0x01, 0x51, 0x09, 0x06}},
    {'A', {0x7E, 0x11, 0x11, 0x11, 0x7E}}, {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}},
    {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}}, {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}},
    {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}}, {'F', {0x7F, 0x09, 0x09, 0x09, 0x01}},
    {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}}, {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}},
    {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}}, {'J', {0x20, 0x40, 0x41, 0x3F, 0x01}},
    {'K', {0x7F, 0x08, 0x14, 0x22, 0x41}}, {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}},
    {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}}, {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}},
    {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}}, {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}},
    {'Q', {0x3E, 0x41, 0x51, 0x21, 0x5E}}, {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}},
    {'S', {0x46, 0x49, 0x49, 0x49, 0x31}}, {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}},
    {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}}, {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}},
    {'W', {0x7F, 0x20, 0x18, 0x20, 0x7F}}, {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
    {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}}, {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
};

const Glyph* find_glyph(char c) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const Glyph& g : kFont)
        if (g.ch == c) return &g;
    return nullptr;
}

std::string fmt_tick(double v) {
    char buf[32];
    double a = std::fabs(v);
    if (v == 0.0)
        std::snprintf(buf, sizeof buf, "0");
    else if (a >= 1000.0 || a < 0.01)
        std::snprintf(buf, sizeof buf, "%.1e", v);
    else
        std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGridLine{225, 225, 225};

constexpr Rgb kPalette[] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
};

} // namespace

// ------------------------------------------------------------------ canvas

Canvas::Canvas(int w, int h, Rgb fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw ConfigError("canvas dimensions must be positive");
    pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill.r;
        pixels[i + 1] = fill.g;
        pixels[i + 2] = fill.b;
    }
}

void Canvas::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
}

Rgb Canvas::get(int x, int y) const {
    std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Canvas::fill_rect(int x, int y, int w, int h, Rgb c) {
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
}

void Canvas::text(int x, int y, const std::string& s, Rgb c) {
    for (char ch : s) {
        if (const Glyph* g = find_glyph(ch)) {
            for (int col = 0; col < 5; ++col)
                for (int row = 0; row < 7; ++row)
                    if (g->col[col] >> row & 1) set(x + col, y + row, c);
        }
        x += 6;
    }
}

void Canvas::save_png(const std::string& path) const {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw RuntimeFailure("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw RuntimeFailure("png encoding failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(pixels.data() +
                                                 static_cast<std::size_t>(y) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Canvas Canvas::load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("cannot read image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("png decoding failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    Canvas canvas(w, h);
    for (int y = 0; y < h; ++y)
        png_read_row(png, canvas.pixels.data() + static_cast<std::size_t>(y) * w * 3, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return canvas;
}

// -------------------------------------------------------------- line chart

void render_line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::string& path, int width, int height) {
    if (series.empty()) throw ConfigError("line chart needs at least one series");
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
    bool first = true;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size())
            throw ConfigError("series '" + s.label + "' has mismatched x/y lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x_lo = x_hi = s.x[i];
                y_lo = y_hi = s.y[i];
                first = false;
            }
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (first) throw ConfigError("line chart has no data points");
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) y_hi = y_lo + 1.0;
    double y_pad = 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;

    const int ml = 64, mr = 16, mt = 28, mb = 44;
    Canvas c(width, height);
    int px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;
    auto to_px = [&](double x) {
        return px0 + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * (px1 - px0)));
    };
    auto to_py = [&](double y) {
        return py1 - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (py1 - py0)));
    };

    const int n_ticks = 5;
    for (int t = 0; t <= n_ticks; ++t) {
        double xv = x_lo + (x_hi - x_lo) * t / n_ticks;
        double yv = y_lo + (y_hi - y_lo) * t / n_ticks;
        c.line(to_px(xv), py0, to_px(xv), py1, kGridLine);
        c.line(px0, to_py(yv), px1, to_py(yv), kGridLine);
    }
    c.line(px0, py0, px0, py1, kAxis);
    c.line(px0, py1, px1, py1, kAxis);
    for (int t = 0; t <= n_ticks; ++t) {
        double xv = x_lo + (x_hi - x_lo) * t / n_ticks;
        double yv = y_lo + (y_hi - y_lo) * t / n_ticks;
        c.line(to_px(xv), py1, to_px(xv), py1 + 4, kAxis);
        c.line(px0 - 4, to_py(yv), px0, to_py(yv), kAxis);
        std::string xs = fmt_tick(xv), ys = fmt_tick(yv);
        c.text(to_px(xv) - Canvas::text_width(xs) / 2, py1 + 8, xs, kAxis);
        c.text(px0 - 8 - Canvas::text_width(ys), to_py(yv) - 3, ys, kAxis);
    }
    c.text(px0, 10, title, kAxis);
    c.text((px0 + px1) / 2 - Canvas::text_width(x_label) / 2, height - 12, x_label, kAxis);
    c.text(4, py0 - 14, y_label, kAxis);

    int legend_y = py0 + 6;
    for (std::size_t si = 0; si < series.size(); ++si) {
        Rgb color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
        const Series& s = series[si];
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            c.line(to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]), to_py(s.y[i + 1]), color);
            // thicken for visibility
            c.line(to_px(s.x[i]), to_py(s.y[i]) + 1, to_px(s.x[i + 1]), to_py(s.y[i + 1]) + 1,
                   color);
        }
        for (std::size_t i = 0; i < s.x.size(); ++i)
            c.fill_rect(to_px(s.x[i]) - 1, to_py(s.y[i]) - 1, 3, 3, color);
        if (!s.label.empty()) {
            int lx = px1 - 120;
            c.fill_rect(lx, legend_y + 2, 10, 3, color);
            c.text(lx + 14, legend_y, s.label, kAxis);
            legend_y += 10;
        }
    }
    c.save_png(path);
}

// --------------------------------------------------------------- bias map

Rgb diverging_color(double value, double max_abs) {
    if (!(max_abs > 0.0)) return {255, 255, 255};
    double t = std::clamp(value / max_abs, -1.0, 1.0);
    auto lerp = [](double a, double b, double u) {
        return static_cast<unsigned char>(std::lround(a + (b - a) * u));
    };
    if (t >= 0.0) // white -> saturated red (overestimation)
        return {lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t)};
    return {lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t)};
}

void render_bias_map(const BiasMap& map, const std::string& title, const std::string& path,
                     int scale) {
    if (scale < 1) throw ConfigError("bias map scale must be >= 1");
    int mh = map.mean_error.shape[0], mw = map.mean_error.shape[1];
    double max_abs = map.mean_error.abs_max();

    const int mt = 24, mb = 28, ml = 8, bar_w = 18, bar_gap = 56;
    int width = ml + mw * scale + bar_gap + bar_w + 64;
    int height = mt + mh * scale + mb;
    Canvas c(width, height);

    for (int y = 0; y < mh; ++y)
        for (int x = 0; x < mw; ++x) {
            Rgb color =
                diverging_color(map.mean_error.data[std::size_t(y) * mw + x], max_abs);
            c.fill_rect(ml + x * scale, mt + y * scale, scale, scale, color);
        }
    // frame
    c.line(ml - 1, mt - 1, ml + mw * scale, mt - 1, kAxis);
    c.line(ml - 1, mt + mh * scale, ml + mw * scale, mt + mh * scale, kAxis);
    c.line(ml - 1, mt - 1, ml - 1, mt + mh * scale, kAxis);
    c.line(ml + mw * scale, mt - 1, ml + mw * scale, mt + mh * scale, kAxis);

    int bx = ml + mw * scale + bar_gap;
    int bh = mh * scale;
    for (int y = 0; y < bh; ++y) {
        double v = max_abs * (1.0 - 2.0 * y / std::max(1, bh - 1));
        Rgb color = diverging_color(v, max_abs);
        for (int x = 0; x < bar_w; ++x) c.set(bx + x, mt + y, color);
    }
    c.text(bx + bar_w + 4, mt - 3, "+" + fmt_tick(max_abs), kAxis);
    c.text(bx + bar_w + 4, mt + bh / 2 - 3, "0", kAxis);
    c.text(bx + bar_w + 4, mt + bh - 4, "-" + fmt_tick(max_abs), kAxis);

    c.text(ml, 8, title, kAxis);
    c.text(ml, height - 18, "mean bias, ug/m3 (red = overestimation)", kAxis);
    c.save_png(path);
}

} // namespace pmnc
