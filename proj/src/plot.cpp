#include "mcm/plot.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "mcm/errors.hpp"

namespace mcm {

namespace {

struct Rgb {
    unsigned char r, g, b;
};

constexpr Rgb kBackground{255, 255, 255};
constexpr Rgb kAxis{60, 60, 60};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kText{40, 40, 40};
constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180},
                                       {214, 39, 40},
                                       {44, 160, 44},
                                       {148, 103, 189},
                                       {255, 127, 14},
                                       {23, 190, 207}}};

class Canvas {
  public:
    Canvas(long w, long h) : w_(w), h_(h), px_(size_t(w * h * 3), 255) {}

    void set(long x, long y, Rgb c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        size_t i = 3 * size_t(y * w_ + x);
        px_[i] = c.r;
        px_[i + 1] = c.g;
        px_[i + 2] = c.b;
    }

    void hline(long x0, long x1, long y, Rgb c) {
        for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
    void vline(long x, long y0, long y1, Rgb c) {
        for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y) set(x, y, c);
    }

    void line(long x0, long y0, long x1, long y1, Rgb c) {
        long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        long err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            long e2 = 2 * err;
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

    void dot(long x, long y, Rgb c) {
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, c);
    }

    void text(long x, long y, const std::string& s, Rgb c);

    long width() const { return w_; }
    long height() const { return h_; }
    const std::vector<unsigned char>& pixels() const { return px_; }

  private:
    long w_, h_;
    std::vector<unsigned char> px_;
};

// 5x7 glyphs, bit 4 = leftmost column. Lowercase, digits, and the symbols
// chart labels need; anything else renders as a hollow box.
const std::array<unsigned char, 7>& glyph(char ch) {
    static const std::map<char, std::array<unsigned char, 7>> table = {
        {' ', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000}},
        {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
        {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
        {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
        {'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
        {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
        {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
        {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
        {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
        {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
        {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
        {'.', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100}},
        {',', {0b00000, 0b00000, 0b00000, 0b00000, 0b00110, 0b00100, 0b01000}},
        {'-', {0b00000, 0b00000, 0b00000, 0b01110, 0b00000, 0b00000, 0b00000}},
        {'+', {0b00000, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00000}},
        {'_', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111}},
        {':', {0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000}},
        {'=', {0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000}},
        {'@', {0b01110, 0b10001, 0b10111, 0b10101, 0b10111, 0b10000, 0b01110}},
        {'/', {0b00001, 0b00010, 0b00100, 0b00100, 0b00100, 0b01000, 0b10000}},
        {'(', {0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010}},
        {')', {0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000}},
        {'a', {0b00000, 0b00000, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111}},
        {'b', {0b10000, 0b10000, 0b11110, 0b10001, 0b10001, 0b10001, 0b11110}},
        {'c', {0b00000, 0b00000, 0b01110, 0b10000, 0b10000, 0b10001, 0b01110}},
        {'d', {0b00001, 0b00001, 0b01111, 0b10001, 0b10001, 0b10001, 0b01111}},
        {'e', {0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110}},
        {'f', {0b00110, 0b01001, 0b01000, 0b11100, 0b01000, 0b01000, 0b01000}},
        {'g', {0b00000, 0b00000, 0b01111, 0b10001, 0b01111, 0b00001, 0b01110}},
        {'h', {0b10000, 0b10000, 0b11110, 0b10001, 0b10001, 0b10001, 0b10001}},
        {'i', {0b00100, 0b00000, 0b01100, 0b00100, 0b00100, 0b00100, 0b01110}},
        {'j', {0b00010, 0b00000, 0b00110, 0b00010, 0b00010, 0b10010, 0b01100}},
        {'k', {0b10000, 0b10000, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010}},
        {'l', {0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
        {'m', {0b00000, 0b00000, 0b11010, 0b10101, 0b10101, 0b10101, 0b10101}},
        {'n', {0b00000, 0b00000, 0b11110, 0b10001, 0b10001, 0b10001, 0b10001}},
        {'o', {0b00000, 0b00000, 0b01110, 0b10001, 0b10001, 0b10001, 0b01110}},
        {'p', {0b00000, 0b00000, 0b11110, 0b10001, 0b11110, 0b10000, 0b10000}},
        {'q', {0b00000, 0b00000, 0b01111, 0b10001, 0b01111, 0b00001, 0b00001}},
        {'r', {0b00000, 0b00000, 0b10110, 0b11001, 0b10000, 0b10000, 0b10000}},
        {'s', {0b00000, 0b00000, 0b01111, 0b10000, 0b01110, 0b00001, 0b11110}},
        {'t', {0b01000, 0b01000, 0b11100, 0b01000, 0b01000, 0b01001, 0b00110}},
        {'u', {0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b10011, 0b01101}},
        {'v', {0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
        {'w', {0b00000, 0b00000, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010}},
        {'x', {0b00000, 0b00000, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001}},
        {'y', {0b00000, 0b00000, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110}},
        {'z', {0b00000, 0b00000, 0b11111, 0b00010, 0b00100, 0b01000, 0b11111}},
    };
    static const std::array<unsigned char, 7> box = {0b11111, 0b10001, 0b10001, 0b10001,
                                                     0b10001, 0b10001, 0b11111};
    auto it = table.find(ch);
    return it == table.end() ? box : it->second;
}

void Canvas::text(long x, long y, const std::string& s, Rgb c) {
    for (char ch : s) {
        const auto& rows = glyph(ch);
        for (int r = 0; r < 7; ++r)
            for (int col = 0; col < 5; ++col)
                if (rows[size_t(r)] & (1 << (4 - col))) set(x + col, y + r, c);
        x += 6;
    }
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

void save_png(const Canvas& canvas, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("plot: cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("plot: PNG encoding failed for '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(canvas.width()), png_uint_32(canvas.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const unsigned char* base = canvas.pixels().data();
    for (long y = 0; y < canvas.height(); ++y)
        png_write_row(png, const_cast<png_bytep>(base + size_t(3 * y * canvas.width())));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

void write_line_chart(const std::string& title, const std::vector<Series>& series,
                      const std::string& path, long width, long height) {
    if (width < 120 || height < 80) throw ParameterError("write_line_chart: canvas too small");
    for (const auto& s : series)
        if (s.xs.size() != s.ys.size())
            throw ParameterError("write_line_chart: series '" + s.label +
                                 "' has mismatched xs/ys");

    Canvas canvas(width, height);
    const long left = 56, right = width - 14, top = 26, bottom = height - 24;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            if (!any) {
                xmin = xmax = s.xs[i];
                ymin = ymax = s.ys[i];
                any = true;
            } else {
                xmin = std::min(xmin, s.xs[i]);
                xmax = std::max(xmax, s.xs[i]);
                ymin = std::min(ymin, s.ys[i]);
                ymax = std::max(ymax, s.ys[i]);
            }
        }
    if (xmax - xmin < 1e-300) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-300) {
        double pad = std::max(1e-12, std::abs(ymax) * 0.1);
        ymin -= pad;
        ymax += pad;
    } else {
        double pad = (ymax - ymin) * 0.05;
        ymin -= pad;
        ymax += pad;
    }

    auto to_x = [&](double v) {
        return left + long(std::lround((v - xmin) / (xmax - xmin) * double(right - left)));
    };
    auto to_y = [&](double v) {
        return bottom - long(std::lround((v - ymin) / (ymax - ymin) * double(bottom - top)));
    };

    for (int i = 0; i <= 4; ++i) {
        double fy = ymin + (ymax - ymin) * double(i) / 4.0;
        long y = to_y(fy);
        canvas.hline(left, right, y, kGrid);
        canvas.text(4, y - 3, tick_label(fy), kText);
        double fx = xmin + (xmax - xmin) * double(i) / 4.0;
        long x = to_x(fx);
        canvas.vline(x, top, bottom, kGrid);
        if (i > 0) canvas.text(x - 8, bottom + 6, tick_label(fx), kText);
    }
    canvas.hline(left, right, bottom, kAxis);
    canvas.vline(left, top, bottom, kAxis);
    canvas.text(left, 8, title, kText);

    long legend_y = top + 4;
    for (size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        Rgb color = kPalette[si % kPalette.size()];
        bool open = false;
        long px = 0, py = 0;
        for (size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) {
                open = false;
                continue;
            }
            long cx = to_x(s.xs[i]), cy = to_y(s.ys[i]);
            if (open)
                canvas.line(px, py, cx, cy, color);
            else
                canvas.dot(cx, cy, color);
            px = cx;
            py = cy;
            open = true;
        }
        if (!s.label.empty()) {
            long lw = long(s.label.size()) * 6;
            canvas.hline(right - lw - 18, right - lw - 8, legend_y + 3, color);
            canvas.text(right - lw - 4, legend_y, s.label, kText);
            legend_y += 10;
        }
    }
    save_png(canvas, path);
}

void write_frame_grid(const std::vector<Tensor>& clips, const std::string& path, long max_clips) {
    if (clips.empty()) throw ParameterError("write_frame_grid: no clips");
    const Shape& s = clips.front().shape;
    if (s.size() != 4) throw ShapeError("write_frame_grid: clips must be [F,C,H,W]");
    const long F = s[0], C = s[1], H = s[2], W = s[3];
    const long rows = std::min<long>(long(clips.size()), max_clips);
    const long gap = 2;
    Canvas canvas(F * (W + gap) + gap, rows * (H + gap) + gap);

    for (long r = 0; r < rows; ++r) {
        const Tensor& clip = clips[size_t(r)];
        if (clip.shape != s) throw ShapeError("write_frame_grid: clips disagree on shape");
        for (long f = 0; f < F; ++f)
            for (long y = 0; y < H; ++y)
                for (long x = 0; x < W; ++x) {
                    // Channel 0 only; the lab's data is single-channel.
                    double v = clip.data[size_t(((f * C) * H + y) * W + x)];
                    double u = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
                    auto g = static_cast<unsigned char>(std::lround(u * 255.0));
                    canvas.set(gap + f * (W + gap) + x, gap + r * (H + gap) + y, {g, g, g});
                }
    }
    save_png(canvas, path);
}

}  // namespace mcm
