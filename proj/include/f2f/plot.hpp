#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "f2f/image_io.hpp"
#include "f2f/tensor.hpp"

namespace f2f {

// Minimal headless line plot rendered straight to PNG: axes, the polyline,
// and point markers. Enough for the sweep charts.
inline void save_line_plot(const std::string& path, const std::vector<double>& xs,
                           const std::vector<double>& ys, int64_t width = 480,
                           int64_t height = 320) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("save_line_plot: need >= 2 matched points");
    Tensor img({3, height, width}, 1.f);
    const int64_t m = 40;  // margin around the plot box

    auto put = [&](int64_t y, int64_t x, float r, float g, float b) {
        if (y < 0 || y >= height || x < 0 || x >= width) return;
        img.at3(0, y, x) = r;
        img.at3(1, y, x) = g;
        img.at3(2, y, x) = b;
    };
    for (int64_t x = m; x <= width - m; ++x) {
        put(height - m, x, 0, 0, 0);
        put(m, x, 0.8f, 0.8f, 0.8f);
    }
    for (int64_t y = m; y <= height - m; ++y) {
        put(y, m, 0, 0, 0);
        put(y, width - m, 0.8f, 0.8f, 0.8f);
    }

    double x_min = *std::min_element(xs.begin(), xs.end());
    double x_max = *std::max_element(xs.begin(), xs.end());
    double y_min = *std::min_element(ys.begin(), ys.end());
    double y_max = *std::max_element(ys.begin(), ys.end());
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;

    auto px = [&](double x) {
        return m + int64_t(std::lround((x - x_min) / (x_max - x_min) * double(width - 2 * m)));
    };
    auto py = [&](double y) {
        return height - m -
               int64_t(std::lround((y - y_min) / (y_max - y_min) * double(height - 2 * m)));
    };

    for (size_t i = 0; i + 1 < xs.size(); ++i) {
        int64_t x0 = px(xs[i]), y0 = py(ys[i]), x1 = px(xs[i + 1]), y1 = py(ys[i + 1]);
        int64_t steps = std::max<int64_t>(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
        for (int64_t s = 0; s <= steps; ++s) {
            double t = double(s) / double(steps);
            put(int64_t(std::lround(y0 + t * double(y1 - y0))),
                int64_t(std::lround(x0 + t * double(x1 - x0))), 0.1f, 0.2f, 0.75f);
        }
    }
    for (size_t i = 0; i < xs.size(); ++i)
        for (int64_t dy = -2; dy <= 2; ++dy)
            for (int64_t dx = -2; dx <= 2; ++dx)
                if (dx * dx + dy * dy <= 4)
                    put(py(ys[i]) + dy, px(xs[i]) + dx, 0.8f, 0.15f, 0.1f);

    save_png(path, img);
}

}  // namespace f2f
