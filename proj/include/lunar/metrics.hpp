#pragma once

#include <cmath>
#include <limits>

#include "lunar/common.hpp"
#include "lunar/image.hpp"
#include "lunar/stripes.hpp"

namespace lunar {

inline double mse(const GrayImage& a, const GrayImage& b) {
    if (!a.same_dims(b)) throw validation_error("mse: image dimensions differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.pixels.size());
}

// 10*log10(max_val^2 / mse), in dB. Identical images return +infinity: a
// legitimate outcome for perfect restoration, not an error.
inline double psnr(const GrayImage& reference, const GrayImage& test, double max_val = 1.0) {
    const double m = mse(reference, test);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / m);
}

// PSNR with the mean taken over masked pixels only; exposes inpainting
// quality that whole-image PSNR hides behind the ~98% copied pixels.
inline double masked_psnr(const GrayImage& reference, const GrayImage& test, const StripeMask& mask,
                          double max_val = 1.0) {
    if (!reference.same_dims(test)) throw validation_error("masked_psnr: image dimensions differ");
    if (mask.w != reference.w || mask.h != reference.h)
        throw validation_error("masked_psnr: mask dimensions differ from images");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
        if (!mask.bits[i]) continue;
        const double d = reference.pixels[i] - test.pixels[i];
        acc += d * d;
        ++n;
    }
    if (n == 0) throw validation_error("masked_psnr: mask is empty, metric undefined");
    const double m = acc / static_cast<double>(n);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / m);
}

}  // namespace lunar
