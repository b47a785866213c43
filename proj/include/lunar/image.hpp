#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lunar/common.hpp"

namespace lunar {

// Single-channel raster. Intensities live in [0,1]; conversion from 8-bit
// storage is value/255 exactly.
struct GrayImage {
    int w = 0;
    int h = 0;
    std::vector<double> pixels;  // row-major, length w*h

    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0)
        : w(width), h(height) {
        if (width < 1 || height < 1)
            throw validation_error("GrayImage dimensions must be positive, got " +
                                   std::to_string(width) + "x" + std::to_string(height));
        pixels.assign(static_cast<std::size_t>(w) * h, fill);
    }

    bool empty() const { return pixels.empty(); }
    std::size_t size() const { return pixels.size(); }

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * w + x]; }

    bool same_dims(const GrayImage& o) const { return w == o.w && h == o.h; }
};

// [0,1] -> [0,255], round-half-away-from-zero.
inline std::uint8_t intensity_to_byte(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

inline double byte_to_intensity(std::uint8_t b) {
    return static_cast<double>(b) / 255.0;
}

inline std::vector<std::uint8_t> quantize(const GrayImage& img) {
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = intensity_to_byte(img.pixels[i]);
    return out;
}

// Bilinear resize with corner-aligned sample mapping: output corner pixels
// sample input corner pixels exactly, so same-size resize is the identity.
inline GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    if (img.empty()) throw validation_error("resize_bilinear: empty input image");
    if (out_w < 1 || out_h < 1)
        throw validation_error("resize_bilinear: output dims must be positive, got " +
                               std::to_string(out_w) + "x" + std::to_string(out_h));

    GrayImage out(out_w, out_h);
    const double sx = out_w > 1 ? static_cast<double>(img.w - 1) / (out_w - 1) : 0.0;
    const double sy = out_h > 1 ? static_cast<double>(img.h - 1) / (out_h - 1) : 0.0;
    // Degenerate single-row/column outputs sample the input center.
    const double ox = out_w > 1 ? 0.0 : (img.w - 1) * 0.5;
    const double oy = out_h > 1 ? 0.0 : (img.h - 1) * 0.5;

    for (int y = 0; y < out_h; ++y) {
        const double fy = oy + sy * y;
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = ox + sx * x;
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double wx = fx - x0;
            const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
            const double bot = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
            out.at(x, y) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

}  // namespace lunar
