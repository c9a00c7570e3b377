#include "plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <png.h>
#include <unistd.h>

namespace expdist::plot {

namespace {

using Rgb = std::array<unsigned char, 3>;

struct Image {
    int width;
    int height;
    std::vector<unsigned char> rgb;

    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}
    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t k = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[k] = c[0];
        rgb[k + 1] = c[1];
        rgb[k + 2] = c[2];
    }
};

// Piecewise-linear approximation of viridis.
Rgb sequential(double t) {
    static const std::array<std::array<double, 3>, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                                              {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(static_cast<int>(t), 3);
    const double f = t - i;
    Rgb c;
    for (int k = 0; k < 3; ++k) c[k] = static_cast<unsigned char>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    return c;
}

Rgb cyclic_map(double angle) {
    const double h = (angle + M_PI) / (2.0 * M_PI);
    Rgb c;
    for (int k = 0; k < 3; ++k) {
        const double v = 0.5 + 0.45 * std::cos(2.0 * M_PI * (h - k / 3.0));
        c[k] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    return c;
}

void save(const std::filesystem::path& path, const Image& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        std::filesystem::remove(tmp);
        throw std::runtime_error("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::filesystem::rename(tmp, path);
}

void line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
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

}  // namespace

void write_heatmap(const std::filesystem::path& path, int nx, int ny, const std::vector<double>& values, bool cyclic,
                   int cell_pixels) {
    if (values.size() != static_cast<std::size_t>(nx) * ny) throw std::invalid_argument("heatmap size mismatch");
    double lo = INFINITY, hi = -INFINITY;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    Image img(nx * cell_pixels, ny * cell_pixels);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double v = values[static_cast<std::size_t>(j) * nx + i];
            Rgb c{128, 128, 128};
            if (std::isfinite(v)) c = cyclic ? cyclic_map(v) : sequential((v - lo) / span);
            for (int b = 0; b < cell_pixels; ++b) {
                for (int a = 0; a < cell_pixels; ++a) img.set(i * cell_pixels + a, (ny - 1 - j) * cell_pixels + b, c);
            }
        }
    }
    save(path, img);
}

void write_curve(const std::filesystem::path& path, const std::vector<double>& x, const std::vector<double>& y,
                 int width, int height) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("curve needs matching non-empty data");
    Image img(width, height);
    const int pad = 24;
    const Rgb frame{0, 0, 0}, ink{33, 90, 180};
    line(img, pad, pad, width - pad, pad, frame);
    line(img, pad, height - pad, width - pad, height - pad, frame);
    line(img, pad, pad, pad, height - pad, frame);
    line(img, width - pad, pad, width - pad, height - pad, frame);
    const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
    double ylo = INFINITY, yhi = -INFINITY;
    for (double v : y) {
        if (!std::isfinite(v)) continue;
        ylo = std::min(ylo, v);
        yhi = std::max(yhi, v);
    }
    const double xs = *xhi > *xlo ? *xhi - *xlo : 1.0;
    const double ys = yhi > ylo ? yhi - ylo : 1.0;
    auto px = [&](double v) { return pad + 8 + static_cast<int>(std::lround((v - *xlo) / xs * (width - 2 * pad - 16))); };
    auto py = [&](double v) {
        return height - pad - 8 - static_cast<int>(std::lround((v - ylo) / ys * (height - 2 * pad - 16)));
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(y[i])) continue;
        const int cx = px(x[i]), cy = py(y[i]);
        for (int d = -3; d <= 3; ++d) {
            line(img, cx - 3, cy + d, cx + 3, cy + d, ink);
        }
        if (i > 0 && std::isfinite(y[i - 1])) line(img, px(x[i - 1]), py(y[i - 1]), cx, cy, ink);
    }
    save(path, img);
}

}  // namespace expdist::plot
