#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "lunar/checkpoint.hpp"
#include "lunar/common.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"
#include "lunar/mosaic.hpp"
#include "lunar/stripes.hpp"
#include "lunar/tensor.hpp"
#include "lunar/unet.hpp"

namespace lunar {

namespace detail {

// Symmetric (edge-inclusive) reflection index, safe for any pad size.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

inline GrayImage pad_reflect(const GrayImage& img, int out_w, int out_h) {
    GrayImage out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = reflect_index(y, img.h);
        for (int x = 0; x < out_w; ++x) out.at(x, y) = img.at(reflect_index(x, img.w), sy);
    }
    return out;
}

}  // namespace detail

// Raw network output for a crop of arbitrary size: reflection-pads to a
// multiple of 2^depth, runs the model, crops back.
inline GrayImage predict_crop(const ModelParams& params, const UNetConfig& cfg, const GrayImage& input) {
    if (input.empty()) throw validation_error("predict_crop: empty input");
    const auto div = static_cast<int>(cfg.divisor());
    const int pw = ((input.w + div - 1) / div) * div;
    const int ph = ((input.h + div - 1) / div) * div;
    const GrayImage padded = (pw == input.w && ph == input.h) ? input : detail::pad_reflect(input, pw, ph);

    Tensor x = Tensor::zeros4(1, 1, ph, pw);
    std::copy(padded.pixels.begin(), padded.pixels.end(), x.data.begin());
    const Tensor y = forward(params, cfg, x);

    GrayImage out(input.w, input.h);
    for (int r = 0; r < input.h; ++r) {
        const double* src = y.data.data() + static_cast<std::size_t>(r) * pw;
        std::copy(src, src + input.w, out.pixels.data() + static_cast<std::size_t>(r) * input.w);
    }
    return out;
}

// Restoration with compositing: known-good pixels are never altered by the
// network. Output equals `corrupted` off-mask bit-identically and the model
// prediction on-mask. Set composite=false to get the raw network output.
inline GrayImage restore_crop(const ModelParams& params, const UNetConfig& cfg, const GrayImage& corrupted,
                              const StripeMask& mask, bool composite = true) {
    if (mask.w != corrupted.w || mask.h != corrupted.h)
        throw validation_error("restore_crop: mask dimensions differ from image");
    if (composite && !mask.any()) return corrupted;

    GrayImage pred = predict_crop(params, cfg, corrupted);
    if (!composite) return pred;

    GrayImage out = corrupted;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        if (mask.bits[i]) out.pixels[i] = pred.pixels[i];
    return out;
}

inline GrayImage restore_crop(const Checkpoint& ckpt, const GrayImage& corrupted, const StripeMask& mask,
                              bool composite = true) {
    return restore_crop(ckpt.params, ckpt.unet, corrupted, mask, composite);
}

struct RestoreRegionResult {
    PixelRect rect;
    double coverage = 0.0;
    bool restored = false;
    std::string out_path;
    std::string sidecar_path;
};

// Region workflow: window the mosaic between two geodetic corners, detect
// stripes, restore if any were found, and write the crop plus a JSON sidecar.
// A stripe-free region is written as a verbatim copy.
inline RestoreRegionResult restore_region(const MosaicReader& mosaic, const GeoPoint& corner_a,
                                          const GeoPoint& corner_b, const Checkpoint& ckpt,
                                          const std::string& out_path, const DetectConfig& detect = {}) {
    const auto& hdr = mosaic.header();
    const PixelCoord pa = geo_to_pixel(hdr, corner_a);
    const PixelCoord pb = geo_to_pixel(hdr, corner_b);

    PixelRect rect;
    rect.x0 = std::min(pa.x, pb.x);
    rect.y0 = std::min(pa.y, pb.y);
    rect.w = std::max(pa.x, pb.x) - rect.x0 + 1;
    rect.h = std::max(pa.y, pb.y) - rect.y0 + 1;

    const GrayImage crop = mosaic.read_window(rect);
    const StripeMask mask = detect_stripes(crop, detect);
    const double coverage = mask_coverage(mask);

    RestoreRegionResult res;
    res.rect = rect;
    res.coverage = coverage;
    res.restored = mask.any();
    res.out_path = out_path;
    res.sidecar_path = out_path + ".json";

    const GrayImage out = res.restored ? restore_crop(ckpt, crop, mask) : crop;
    write_image(out, out_path);

    const nlohmann::json sidecar = {{"rect", {{"x0", rect.x0}, {"y0", rect.y0}, {"w", rect.w}, {"h", rect.h}}},
                                    {"detected_coverage", coverage},
                                    {"restored", res.restored},
                                    {"checkpoint_id", ckpt.params_hash()}};
    std::ofstream f(res.sidecar_path, std::ios::trunc);
    if (!f) throw io_error("cannot create sidecar: " + res.sidecar_path);
    f << sidecar.dump(2) << "\n";
    if (!f) throw io_error("short write: " + res.sidecar_path);
    return res;
}

}  // namespace lunar
